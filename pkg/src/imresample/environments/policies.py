"""Named behavior and target policies for each microworld."""

from __future__ import annotations

import numpy as np

from ..core import ConstantPolicy, RegionPolicy, TabularPolicy
from .fourrooms import DOWN

CHAIN_PAIRS = {
    # name: (behavior [left, right], target [left, right])
    "mu90_pi10": ([0.9, 0.1], [0.1, 0.9]),
    "mu50_pi10": ([0.5, 0.5], [0.1, 0.9]),
    "mu99_pi01": ([0.99, 0.01], [0.01, 0.99]),
}


def chain_policy(probs, name=""):
    return ConstantPolicy(probs, name=name or f"chain{list(probs)}")


def chain_pair(name: str):
    mu, pi = CHAIN_PAIRS[name]
    return chain_policy(mu, f"{name}/behavior"), chain_policy(pi, f"{name}/target")


def uniform(n_actions: int = 4):
    return ConstantPolicy(np.full(n_actions, 1.0 / n_actions), name="uniform")


def persistent_down():
    p = np.zeros(4)
    p[DOWN] = 1.0
    return ConstantPolicy(p, name="persistent_down")


def favored_down(p_down: float = 0.9):
    p = np.full(4, (1.0 - p_down) / 3)
    p[DOWN] = p_down
    return ConstantPolicy(p, name="favored_down")


def _skewed_down(p_down: float) -> np.ndarray:
    p = np.full(4, (1.0 - p_down) / 3)
    p[DOWN] = p_down
    return p


def fourrooms_special_states(n_states: int, seed: int, n_special: int = 25) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_states, size=n_special, replace=False))


def fourrooms_behavior(n_states: int, seed: int = 0, n_special: int = 25, p_down: float = 0.05):
    """Uniform except in ``n_special`` seeded states, where down has probability ``p_down``."""
    table = np.full((n_states, 4), 0.25)
    table[fourrooms_special_states(n_states, seed, n_special)] = _skewed_down(p_down)
    return TabularPolicy(table, name=f"fourrooms_skewed(seed={seed})")


def subsection_boxes(env, seed: int, n_cells: int = 25):
    """``n_cells`` distinct open 1x1 grid cells of a continuous env, as boxes."""
    rng = np.random.default_rng(seed)
    open_cells = np.argwhere(env.grid != "#")
    pick = rng.choice(len(open_cells), size=n_cells, replace=False)
    return [env.cell_box(*open_cells[i]) for i in sorted(pick)], rng


def state_variant(env, seed: int = 0, n_cells: int = 25, p_down: float = 0.1):
    boxes, _ = subsection_boxes(env, seed, n_cells)
    p = _skewed_down(p_down)
    return RegionPolicy(np.full(4, 0.25), [(b, p) for b in boxes], name=f"state_variant(seed={seed})")


def state_weight_variant(env, seed: int = 0, n_cells: int = 25):
    boxes, rng = subsection_boxes(env, seed, n_cells)
    regions = []
    for b in boxes:
        p = rng.dirichlet(np.ones(4))
        p /= p.sum()
        regions.append((b, p))
    return RegionPolicy(np.full(4, 0.25), regions, name=f"state_weight_variant(seed={seed})")


def make_policy(name: str, env=None, seed: int = 0):
    """Resolve a policy by its config name."""
    if name.startswith("chain:"):
        probs = [float(x) for x in name.split(":", 1)[1].split(",")]
        return chain_policy(probs)
    if name == "uniform":
        return uniform(getattr(env, "n_actions", 4))
    if name == "persistent_down":
        return persistent_down()
    if name == "favored_down":
        return favored_down()
    if name == "fourrooms_skewed":
        return fourrooms_behavior(env.n_states, seed=seed)
    if name == "state_variant":
        return state_variant(env, seed=seed)
    if name == "state_weight_variant":
        return state_weight_variant(env, seed=seed)
    raise KeyError(f"unknown policy {name!r}")
