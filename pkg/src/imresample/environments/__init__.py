from .chain import LEFT as CHAIN_LEFT, RIGHT as CHAIN_RIGHT, ChainEnv
from .cont_fourrooms import ContFourRoomsEnv
from .fourrooms import DOWN, LEFT, RIGHT, UP, FourRoomsEnv, load_layout
from .policies import (CHAIN_PAIRS, chain_pair, chain_policy, favored_down, fourrooms_behavior,
                       make_policy, persistent_down, state_variant, state_weight_variant, uniform)
from .tabular import TabularModel, random_mdp


def make_env(kind: str, rng=None, **params):
    if kind == "chain":
        return ChainEnv(rng=rng, **params)
    if kind == "fourrooms":
        return FourRoomsEnv(rng=rng, **params)
    if kind == "cont_fourrooms":
        return ContFourRoomsEnv(rng=rng, **params)
    raise KeyError(f"unknown environment {kind!r}")


__all__ = [
    "random_mdp", "CHAIN_LEFT", "CHAIN_RIGHT", "ChainEnv", "ContFourRoomsEnv", "FourRoomsEnv", "TabularModel",
    "UP", "RIGHT", "DOWN", "LEFT", "load_layout", "make_env", "make_policy",
    "CHAIN_PAIRS", "chain_pair", "chain_policy", "uniform", "persistent_down", "favored_down",
    "fourrooms_behavior", "state_variant", "state_weight_variant",
]
