"""Executable checks of the resampling bias/variance results, with fixed seeds.

Each ``check_*`` returns a JSON-serializable dict with ``name``, ``passed``
and diagnostics. Several accept a replacement for the quantity under test
(``bc_mean``, ``v_bc``) so that deliberately broken variants can be shown
to fail.
"""

from __future__ import annotations

import time
from statistics import NormalDist

import numpy as np

from .approx import LinearValueFunction, TabularFeatures
from .buffer import ReplayBuffer
from .core import Transition
from .environments import ChainEnv, FourRoomsEnv, chain_pair, make_policy
from .estimators import expected_bcir_update, expected_ir_update, per_transition_deltas, wis_optimal_update
from .exceptions import PremiseViolated
from .oracle import (buffer_statistics, bias_decay_study, check_theorem3, check_theorem4,
                     closed_form_variances, resampling_tv, sample_update_draws, trace_variance,
                     transition_table)


def chain_table(pair: str = "mu90_pi10"):
    env = ChainEnv()
    mu, pi = chain_pair(pair)
    states = np.arange(env.n_states)
    return transition_table(env.model(), mu.table(states), pi.table(states))


def fourrooms_table(behavior: str = "fourrooms_skewed", target: str = "persistent_down", seed: int = 0):
    env = FourRoomsEnv()
    states = np.arange(env.n_states)
    mu = make_policy(behavior, env, seed=seed)
    pi = make_policy(target, env, seed=seed)
    return transition_table(env.model(), mu.table(states), pi.table(states))


def chain_theta() -> np.ndarray:
    """Value weights of one at every nonterminal chain state."""
    return np.r_[0.0, np.ones(8), 0.0]


def table_buffer(table, ids) -> ReplayBuffer:
    """Replay buffer holding the given transition-table rows, in order."""
    buf = ReplayBuffer(len(ids), TabularFeatures(table.n_features))
    for i in ids:
        buf.push(Transition(int(table.s[i]), int(table.a[i]), int(table.s_next[i]), float(table.cumulant[i]),
                            float(table.gamma[i]), float(table.rho[i])))
    return buf


def _result(name, passed, t0, **info):
    return {"name": name, "passed": bool(passed), "seconds": round(time.perf_counter() - t0, 3), **info}


def check_ir_mean_equals_wis(n_buffers: int = 100, max_n: int = 64, seed: int = 0, atol: float = 1e-12,
                             ir_mean=None) -> dict:
    """Exact E[X_IR | B] equals the whole-buffer WIS update, for random buffers and weights."""
    t0 = time.perf_counter()
    ir_mean = ir_mean or expected_ir_update
    rng = np.random.default_rng(seed)
    tables = [chain_table(), fourrooms_table()]
    worst = 0.0
    done = 0
    while done < n_buffers:
        table = tables[done % 2]
        n = int(rng.integers(1, max_n + 1))
        ids = table.sample(n, rng)
        if table.rho[ids].sum() == 0:
            continue
        buf = table_buffer(table, ids)
        vf = LinearValueFunction(buf.featurizer, rng.normal(size=table.n_features))
        worst = max(worst, float(np.max(np.abs(ir_mean(buf, vf) - wis_optimal_update(buf, vf)))))
        done += 1
    return _result("ir_mean_equals_wis", worst <= atol, t0, max_abs_diff=worst, buffers=n_buffers, atol=atol)


def check_bcir_unbiased(n: int = 100, m_buffers: int = 10_000, seed: int = 1, z: float = 3.0,
                        bc_mean=None) -> dict:
    """Grand mean of E[X_BC | B] over i.i.d. chain buffers matches E_pi[Delta] per component.

    ``bc_mean(table, ids, theta)`` returns the (m, d) conditional means;
    components whose spread is zero must match exactly. Weights are random
    so that every nonterminal state has a nonzero expected update.
    """
    t0 = time.perf_counter()
    table = chain_table()
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=table.n_features)
    ids = table.sample((m_buffers, n), rng)
    means = bc_mean(table, ids, theta) if bc_mean else buffer_statistics(table, ids, theta)["bc"]
    target = table.expected_target_update(theta)
    grand = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / np.sqrt(m_buffers)
    err = np.abs(grand - target)
    ok = np.where(se > 0, err <= z * se, err <= 1e-12)
    zs = np.divide(err, se, out=np.zeros_like(err), where=se > 0)
    return _result("bcir_unbiased", ok.all(), t0, max_z=float(zs.max()), z_limit=z, n=n, buffers=m_buffers)


def _random_buffer(rng, tables):
    table = tables[int(rng.integers(len(tables)))]
    while True:
        ids = table.sample(int(rng.integers(20, 201)), rng)
        if table.rho[ids].sum() > 0:
            break
    buf = table_buffer(table, ids)
    theta = rng.normal(size=table.n_features)
    return buf, theta


def check_variance_closed_forms(n_buffers: int = 50, n_draws: int = 100_000, seed: int = 2,
                                z: float = 4.0, min_pass: int = 48, v_bc=None, v_is=None) -> dict:
    """Empirical IS and BC-IR update variances match their closed forms on random buffers.

    ``v_bc(rho, deltas, k)`` / ``v_is(...)`` replace the closed forms under test.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    tables = [chain_table(), chain_table("mu50_pi10"), fourrooms_table()]
    passes = 0
    worst = []
    for _ in range(n_buffers):
        buf, theta = _random_buffer(rng, tables)
        k = int(rng.integers(1, 17))
        D = per_transition_deltas(buf, theta)
        rho = buf.live_rho()
        cf = closed_form_variances(rho, D, k)
        closed = {"is": v_is(rho, D, k) if v_is else cf["v_is"],
                  "bcir": v_bc(rho, D, k) if v_bc else cf["v_bc"]}
        ok = True
        zmax = 0.0
        for name in ("is", "bcir"):
            var, se = trace_variance(sample_update_draws(buf, theta, k, name, n_draws, rng))
            zz = abs(var - closed[name]) / se if se > 0 else (0.0 if abs(var - closed[name]) <= 1e-12 else np.inf)
            zmax = max(zmax, zz)
            ok &= zz <= z
        passes += ok
        worst.append(zmax)
    return _result("variance_closed_forms", passes >= min_pass, t0, buffers_passed=int(passes),
                   buffers=n_buffers, min_pass=min_pass, max_z=float(max(worst)))


def _unit_rows(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def check_constant_norm_gap(n_buffers: int = 100, seed: int = 3, atol: float = 1e-10) -> dict:
    """With constant ||Delta||^2 = c, V_IS - V_BC = (c/k) times the (biased) variance of rho."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    holds = True
    for _ in range(n_buffers):
        n = int(rng.integers(2, 200))
        d = int(rng.integers(1, 20))
        c = float(rng.uniform(0.1, 3.0))
        k = int(rng.integers(1, 33))
        rho = rng.lognormal(0.0, 1.0, size=n)
        D = _unit_rows(rng, n, d) * np.sqrt(c)
        ok, diff, pred = check_theorem4(rho, D, k, atol=atol)
        holds &= ok
        worst = max(worst, abs(diff - pred))
    return _result("constant_norm_gap", holds, t0, max_abs_diff=worst, atol=atol, buffers=n_buffers)


def check_premise_gap(n_buffers: int = 100, seed: int = 4, atol: float = 1e-12) -> dict:
    """Premise-satisfying buffers give V_BC < V_IS; the boundary family ||Delta_j||^2 = c/rho_j gives equality."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    strict = True
    worst_boundary = 0.0
    min_gap = np.inf
    for _ in range(n_buffers):
        n = int(rng.integers(2, 100))
        d = int(rng.integers(1, 10))
        c = float(rng.uniform(0.1, 2.0))
        k = int(rng.integers(1, 17))
        rho = rng.uniform(0.1, 3.0, size=n)
        if np.all(rho == rho.mean()):
            continue
        hi = rho >= rho.mean()
        scale = np.where(hi, 1.0 + rng.uniform(0.05, 1.0, size=n), 1.0 - rng.uniform(0.05, 0.9, size=n))
        U = _unit_rows(rng, n, d)
        gap = check_theorem3(rho, U * np.sqrt(c / rho * scale)[:, None], c, k)
        min_gap = min(min_gap, gap)
        strict &= gap > 0
        cf = closed_form_variances(rho, U * np.sqrt(c / rho)[:, None], k)
        worst_boundary = max(worst_boundary, abs(cf["v_is"] - cf["v_bc"]))
    # a buffer violating the premise must be refused
    try:
        check_theorem3(np.array([1.0, 3.0]), np.array([[2.0], [0.1]]), 1.0)
        refused = False
    except PremiseViolated:
        refused = True
    return _result("premise_gap", strict and worst_boundary <= atol and refused, t0, min_gap=float(min_gap),
                   boundary_max_abs_diff=worst_boundary, atol=atol, violation_refused=refused)


def chain_stream(T: int, seed: int, pair: str = "mu90_pi10"):
    """States, next states, cumulants, continuations and ratios of a behavior stream on the chain."""
    env = ChainEnv(rng=np.random.default_rng(seed))
    mu, pi = chain_pair(pair)
    rng = np.random.default_rng(seed + 1)
    p_left = mu.probs(0)[0]
    rho_by_a = pi.probs(0) / mu.probs(0)
    acts = (rng.random(T) >= p_left).astype(np.int64)
    out = np.empty((T, 5))
    for t in range(T):
        s = env.state
        tr = env.step(int(acts[t]), float(rho_by_a[acts[t]]))
        out[t] = (s, tr.s_next, tr.cumulant, tr.gamma_next, tr.rho)
    return out


def sliding_window_means(stream: np.ndarray, theta: np.ndarray, window: int) -> np.ndarray:
    """(T - window + 1, d) matrix of (1/n) sum over each window of rho * delta * phi(s)."""
    s = stream[:, 0].astype(np.int64)
    s2 = stream[:, 1].astype(np.int64)
    delta = stream[:, 2] + np.where(stream[:, 3] != 0, stream[:, 3] * theta[s2], 0.0) - theta[s]
    contrib = np.zeros((len(s), len(theta)))
    contrib[np.arange(len(s)), s] = stream[:, 4] * delta
    csum = np.vstack([np.zeros(len(theta)), np.cumsum(contrib, axis=0)])
    return (csum[window:] - csum[:-window]) / window


def check_sliding_window(T: int = 1_000_000, window: int = 100, seed: int = 5, rtol: float = 0.01,
                         n_crosscheck: int = 2000) -> dict:
    """Running average of E[X_BC | B_t] over a sliding-window stream approaches E_pi[Delta]."""
    t0 = time.perf_counter()
    table = chain_table()
    theta = chain_theta()
    stream = chain_stream(T, seed)
    means = sliding_window_means(stream, theta, window)
    avg = means.mean(axis=0)
    target = table.expected_target_update(theta)
    rel = float(np.linalg.norm(avg - target) / np.linalg.norm(target))
    # the window formula agrees with the buffer's own expected BC-IR update
    buf = ReplayBuffer(window, TabularFeatures(10))
    vf = LinearValueFunction(buf.featurizer, theta)
    worst = 0.0
    for t in range(min(n_crosscheck, T)):
        s, s2, c, g, r = stream[t]
        buf.push(Transition(int(s), 0, int(s2), float(c), float(g), float(r)))
        if t + 1 >= window:
            worst = max(worst, float(np.max(np.abs(expected_bcir_update(buf, vf) - means[t + 1 - window]))))
    return _result("sliding_window_consistency", rel <= rtol and worst <= 1e-12, t0, relative_error=rel,
                   rtol=rtol, T=T, window=window, buffer_crosscheck_max_diff=worst)


def check_resampling_tv(sizes=(100, 1000, 10_000), reps: int = 20, n_draws: int = 100_000,
                        seed: int = 6) -> dict:
    """Median TV between resampled transitions and the target transition distribution shrinks with n."""
    t0 = time.perf_counter()
    table = chain_table()
    rng = np.random.default_rng(seed)
    medians = []
    for n in sizes:
        tvs = []
        for _ in range(reps):
            ids = table.sample(n, rng)
            tvs.append(resampling_tv(ids, table.rho[ids], table.q, n_draws, rng))
        medians.append(float(np.median(tvs)))
    mono = all(a > b for a, b in zip(medians, medians[1:]))
    return _result("resampling_tv", mono, t0, sizes=list(sizes), median_tv=medians)


def check_bias_decay(n_list=(50, 100, 200, 400), m_buffers: int = 10_000, seed: int = 7,
                     factor: float = 2.0, family_alpha: float = 0.01) -> dict:
    """n * ||bias(IR)|| stays within a constant factor; BC-IR bias is not significantly nonzero."""
    t0 = time.perf_counter()
    table = chain_table()
    rows = bias_decay_study(table, chain_theta(), n_list, m_buffers, np.random.default_rng(seed))
    scaled = [r["n"] * r["bias_ir_norm"] for r in rows]
    ratio = max(scaled) / min(scaled)
    zlim = NormalDist().inv_cdf(1 - family_alpha / (2 * table.n_features))
    bc_ok = True
    zmax = 0.0
    for r in rows:
        b, se = np.abs(r["bias_bc"]), r["bias_bc_se"]
        zz = np.divide(b, se, out=np.zeros_like(b), where=se > 0)
        bc_ok &= bool(np.all(np.where(se > 0, zz <= zlim, b <= 1e-12)))
        zmax = max(zmax, float(zz.max()))
    return _result("bias_decay", ratio <= factor and bc_ok, t0, n=list(n_list), n_times_bias=scaled,
                   spread_ratio=ratio, factor=factor, bcir_max_z=zmax, bcir_z_limit=zlim)


CHECKS = {
    "ir_mean_equals_wis": check_ir_mean_equals_wis,
    "bcir_unbiased": check_bcir_unbiased,
    "variance_closed_forms": check_variance_closed_forms,
    "constant_norm_gap": check_constant_norm_gap,
    "premise_gap": check_premise_gap,
    "sliding_window_consistency": check_sliding_window,
    "resampling_tv": check_resampling_tv,
    "bias_decay": check_bias_decay,
}


def run_theory_suite(only=None, overrides: dict | None = None) -> dict:
    """Run every check (or those named in ``only``); ``overrides`` maps check name to kwargs."""
    overrides = overrides or {}
    results = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        results.append(fn(**overrides.get(name, {})))
    return {"passed": all(r["passed"] for r in results), "checks": results}
