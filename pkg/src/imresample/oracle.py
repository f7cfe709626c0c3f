"""Ground truth, error metrics and exact (closed-form) update statistics.

Everything here that takes a :class:`TransitionTable` works on tabular
problems by exact enumeration of the (s, a, s') support, so expectations
under the behavior and target transition distributions are sums, not
Monte Carlo estimates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import EmptySample, NonConvergence, PremiseViolated

# ---------------------------------------------------------------------------
# dynamic programming and stationary distributions


def dp_true_values(model, pi_table, threshold: float = 1e-15, max_iter: int = 10**7) -> np.ndarray:
    """Iterative policy evaluation until the max-norm change drops below ``threshold``."""
    pi_table = np.asarray(pi_table, dtype=float)
    reward = np.einsum("sa,sat,sat->s", pi_table, model.P, model.C)
    M = np.einsum("sa,sat,sat->st", pi_table, model.P, model.G)
    v = np.zeros(model.n_states)
    for _ in range(max_iter):
        new = reward + M @ v
        change = np.max(np.abs(new - v))
        v = new
        if change < threshold:
            return v
    raise NonConvergence(f"policy evaluation did not converge in {max_iter} sweeps")


def bellman_residual(model, pi_table, v) -> float:
    reward = np.einsum("sa,sat,sat->s", pi_table, model.P, model.C)
    M = np.einsum("sa,sat,sat->st", pi_table, model.P, model.G)
    return float(np.max(np.abs(reward + M @ v - v)[model.states]))


def stationary_distribution(model, mu_table, tol: float = 1e-12, max_iter: int = 10**6) -> np.ndarray:
    """State-visitation distribution of the behavior process (with restarts), by power iteration."""
    K = model.state_kernel(np.asarray(mu_table, dtype=float))
    d = np.zeros(model.n_states)
    d[model.states] = 1.0 / len(model.states)
    for _ in range(max_iter):
        new = d @ K
        new /= new.sum()
        if np.max(np.abs(new - d)) < tol:
            return new
        d = new
    raise NonConvergence("power iteration for the stationary distribution did not converge")


# ---------------------------------------------------------------------------
# exact transition tables


@dataclass(frozen=True)
class TransitionTable:
    """Distinct (s, a, s') transitions with their behavior (p) and target (q) probabilities."""

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    cumulant: np.ndarray
    gamma: np.ndarray
    p: np.ndarray
    q: np.ndarray
    rho: np.ndarray
    n_features: int

    def __len__(self):
        return len(self.s)

    def td_errors(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        boot = np.where(self.gamma != 0.0, self.gamma * theta[self.s_next], 0.0)
        return self.cumulant + boot - theta[self.s]

    def deltas(self, theta) -> np.ndarray:
        """Dense (transitions x features) matrix of one-hot TD updates."""
        out = np.zeros((len(self), self.n_features))
        out[np.arange(len(self)), self.s] = self.td_errors(theta)
        return out

    def expected_target_update(self, theta) -> np.ndarray:
        """E_pi[Delta] = sum_x q(x) delta_x phi(s_x)."""
        return np.bincount(self.s, weights=self.q * self.td_errors(theta), minlength=self.n_features)

    def sample(self, size, rng) -> np.ndarray:
        """Transition ids drawn i.i.d. from p."""
        return rng.choice(len(self), size=size, p=self.p)


def transition_table(model, mu_table, pi_table, d_mu=None) -> TransitionTable:
    from .core import ratio_table

    mu_table = np.asarray(mu_table, dtype=float)
    pi_table = np.asarray(pi_table, dtype=float)
    if d_mu is None:
        d_mu = stationary_distribution(model, mu_table)
    rho_sa = ratio_table(pi_table, mu_table)
    s, a, s2 = model.support()
    p = d_mu[s] * mu_table[s, a] * model.P[s, a, s2]
    q = d_mu[s] * pi_table[s, a] * model.P[s, a, s2]
    keep = (p > 0) | (q > 0)
    s, a, s2, p, q = s[keep], a[keep], s2[keep], p[keep], q[keep]
    return TransitionTable(s, a, s2, model.C[s, a, s2], model.G[s, a, s2], p / p.sum(), q / q.sum(),
                           rho_sa[s, a], model.n_states)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class TrueValues:
    """Reference values for a set of evaluation states."""

    states: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None
    provenance: str = "dp"

    def to_csv(self, path) -> None:
        states = np.asarray(self.states)
        se = np.zeros(len(self.values)) if self.stderr is None else self.stderr
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if states.ndim == 1:
                w.writerow(["state", "value", "stderr"])
                rows = ([int(s)] for s in states)
            else:
                w.writerow(["x", "y", "value", "stderr"])
                rows = ([repr(float(c)) for c in s] for s in states)
            for head, v, e in zip(rows, self.values, se):
                w.writerow(head + [repr(float(v)), repr(float(e))])

    @classmethod
    def from_csv(cls, path, provenance: str = "cache") -> "TrueValues":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            rows = [list(map(float, row)) for row in r]
        arr = np.array(rows).reshape(-1, len(header))
        if header[0] == "state":
            states = arr[:, 0].astype(np.int64)
        else:
            states = arr[:, :2]
        return cls(states, arr[:, -2], arr[:, -1], provenance)


def ave(estimate, truth) -> float:
    """Mean absolute value error over the evaluation states."""
    estimate = np.asarray(estimate, dtype=float)
    truth_v = truth.values if isinstance(truth, TrueValues) else np.asarray(truth, dtype=float)
    return float(np.mean(np.abs(estimate - truth_v)))


def mave(errors) -> float:
    """Mean of per-interaction errors over a run."""
    return float(np.mean(np.asarray(errors, dtype=float)))


def rollout_horizon(gamma: float, tol: float = 1e-3) -> int:
    if gamma <= 0.0:
        return 1
    if gamma >= 1.0:
        raise ValueError("rollout truncation needs gamma < 1")
    return math.ceil(math.log(tol) / math.log(gamma))


def rollout_true_values(env, pi, probes, n_rollouts: int, horizon: int | None, rng) -> TrueValues:
    """Monte Carlo returns under ``pi`` from each probe state of a continuous env."""
    probes = np.asarray(probes, dtype=float).reshape(-1, 2)
    H = rollout_horizon(env.gamma) if horizon is None else horizon
    pos = np.repeat(probes, n_rollouts, axis=0)
    ret = np.zeros(len(pos))
    disc = np.ones(len(pos))
    alive = np.ones(len(pos), dtype=bool)
    for _ in range(H):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        a = pi.sample_batch(pos[idx], rng)
        disp = env.sample_displacements(a, rng)
        end, hit, _ = env.move(pos[idx], disp)
        ret[idx[hit]] += disc[idx[hit]]
        disc[idx] *= np.where(hit, 0.0, env.gamma)
        pos[idx] = end
        alive[idx[hit]] = False
    ret = ret.reshape(len(probes), n_rollouts)
    se = ret.std(axis=1, ddof=1) / np.sqrt(n_rollouts) if n_rollouts > 1 else np.zeros(len(probes))
    return TrueValues(probes, ret.mean(axis=1), se, provenance="rollout")


# ---------------------------------------------------------------------------
# closed-form conditional moments for a fixed buffer


def closed_form_variances(rho, deltas, k: int) -> dict:
    """Trace variances of the IS, BC-IR and IR mini-batch estimators given a buffer.

    ``deltas`` has one row per buffer entry. ``mu_b`` is the (shared) mean of
    the IS and BC-IR estimators, ``mu_ir`` the mean of IR.
    """
    rho = np.asarray(rho, dtype=float)
    D = np.asarray(deltas, dtype=float).reshape(len(rho), -1)
    n = len(rho)
    sq = np.einsum("ij,ij->i", D, D)
    rho_bar = rho.mean()
    mu_b = rho @ D / n
    mm = float(mu_b @ mu_b)
    out = {
        "mu_b": mu_b,
        "v_is": (float(np.dot(rho * rho, sq)) / n - mm) / k,
        "v_bc": (rho_bar * float(np.dot(rho, sq)) / n - mm) / k,
        "rho_bar": float(rho_bar),
    }
    if rho.sum() > 0:
        p = rho / rho.sum()
        mu_ir = p @ D
        out["mu_ir"] = mu_ir
        out["v_ir"] = (float(np.dot(p, sq)) - float(mu_ir @ mu_ir)) / k
    return out


def check_theorem3(rho, deltas, c: float, k: int = 1, tol: float = 0.0) -> float:
    """Gap V_IS - V_BC for a buffer meeting the premise; raises if the premise fails.

    The premise: ||Delta_j||^2 > c / rho_j where rho_j >= mean(rho), and
    ||Delta_j||^2 < c / rho_j where rho_j < mean(rho). ``tol`` admits the
    boundary case ||Delta_j||^2 == c / rho_j up to rounding.
    """
    rho = np.asarray(rho, dtype=float)
    D = np.asarray(deltas, dtype=float).reshape(len(rho), -1)
    if c <= 0 or np.any(rho <= 0):
        raise PremiseViolated("need c > 0 and strictly positive ratios")
    sq = np.einsum("ij,ij->i", D, D)
    thresh = c / rho
    hi = rho >= rho.mean()
    ok = np.where(hi, sq >= thresh * (1 - tol), sq <= thresh * (1 + tol)) if tol else \
        np.where(hi, sq > thresh, sq < thresh)
    if not ok.all():
        raise PremiseViolated(f"premise fails at entries {np.flatnonzero(~ok).tolist()}")
    cf = closed_form_variances(rho, D, k)
    return cf["v_is"] - cf["v_bc"]


def check_theorem4(rho, deltas, k: int = 1, atol: float = 1e-10):
    """For constant ||Delta||^2 = c: V_IS - V_BC == (c/k) * (mean(rho^2) - mean(rho)^2).

    Returns ``(holds, difference, predicted)``.
    """
    rho = np.asarray(rho, dtype=float)
    D = np.asarray(deltas, dtype=float).reshape(len(rho), -1)
    sq = np.einsum("ij,ij->i", D, D)
    if not np.allclose(sq, sq[0], rtol=1e-12, atol=1e-14):
        raise PremiseViolated("update norms are not constant across the buffer")
    c = float(sq.mean())
    cf = closed_form_variances(rho, D, k)
    diff = cf["v_is"] - cf["v_bc"]
    predicted = c / k * (float(np.mean(rho * rho)) - float(rho.mean()) ** 2)
    return abs(diff - predicted) <= atol, diff, predicted


# ---------------------------------------------------------------------------
# Monte Carlo estimates of estimator spread for a fixed buffer


def sample_update_draws(buf, theta, k: int, estimator, n_draws: int, rng, chunk: int = 4096) -> np.ndarray:
    """Matrix of ``n_draws`` independent update directions from a fixed buffer and weights."""
    from .estimators import make_estimator, per_transition_deltas, wis_optimal_update

    est = make_estimator(estimator)
    d = theta.shape[0]
    if est.name == "wis_optimal":
        from .approx import LinearValueFunction

        x = wis_optimal_update(buf, LinearValueFunction(buf.featurizer, theta))
        return np.tile(x, (n_draws, 1))
    D = per_transition_deltas(buf, theta)
    rho = buf.live_rho()
    n = buf.count
    out = np.empty((n_draws, d))
    for lo in range(0, n_draws, chunk):
        m = min(chunk, n_draws - lo)
        if est.sampling == "proportional":
            idx = buf.tree.sample(m * k, rng).reshape(m, k)
        else:
            idx = rng.integers(0, n, size=(m, k))
        r = rho[idx]
        if est.name in ("ir", "onpolicy"):
            coef = np.full((m, k), 1.0 / k)
        elif est.name == "bcir":
            coef = np.full((m, k), buf.mean_ratio() / k)
        elif est.name == "is":
            coef = r / k
        elif est.name == "vtrace":
            coef = np.minimum(r, est.clip) / k
        elif est.name == "wis_minibatch":
            tot = r.sum(axis=1, keepdims=True)
            coef = np.divide(r, tot, out=np.zeros_like(r), where=tot > 0)
        elif est.name == "wis_buffer":
            coef = r * (n / (k * buf.total_weight()))
        else:
            raise ValueError(f"no sampled direction for {est.name}")
        out[lo:lo + m] = np.einsum("mk,mkd->md", coef, D[idx])
    return out


def trace_variance(draws: np.ndarray):
    """Sum of per-component sample variances and its Monte Carlo standard error."""
    x = np.asarray(draws, dtype=float)
    m = x.shape[0]
    z = x - x[0]  # shift by a sample so constant draws give exactly zero
    zbar = z.mean(axis=0)
    dev = z - zbar
    sq = np.einsum("ij,ij->i", dev, dev)
    var = float(sq.sum() / (m - 1))
    se = float(sq.std(ddof=1) / np.sqrt(m) * m / (m - 1))
    return var, se


def empirical_update_variance(buf, vf, k: int, estimator, n_draws: int, rng, return_se: bool = False):
    if n_draws < 2:
        raise EmptySample("need at least two draws")
    var, se = trace_variance(sample_update_draws(buf, vf.theta, k, estimator, n_draws, rng))
    return (var, se) if return_se else var


# ---------------------------------------------------------------------------
# resampling-distribution and bias studies on transition tables


def resampling_tv(ids, rho, q, n_draws, rng) -> float:
    """Total-variation distance between the resampled distribution of a buffer and ``q``.

    ``ids`` are transition-table ids of the buffer entries. With ``n_draws``
    None the exact resampling distribution (rho-proportional) is used.
    """
    ids = np.asarray(ids)
    rho = np.asarray(rho, dtype=float)
    if n_draws is not None and n_draws <= 0:
        raise EmptySample("n_draws must be positive")
    w = np.bincount(ids, weights=rho, minlength=len(q))
    if n_draws is None:
        emp = w / w.sum()
    else:
        picks = rng.choice(len(q), size=n_draws, p=w / w.sum())
        emp = np.bincount(picks, minlength=len(q)) / n_draws
    return 0.5 * float(np.abs(emp - q).sum())


def buffer_statistics(table: TransitionTable, ids: np.ndarray, theta) -> dict:
    """Exact conditional means of IR and BC-IR for a batch of i.i.d. buffers.

    ``ids`` is (m, n): m buffers of n transition ids each. Returns per-buffer
    ``wis`` = E[X_IR|B] and ``bc`` = E[X_BC|B] as (m, d) arrays.
    """
    ids = np.atleast_2d(ids)
    m, n = ids.shape
    d = table.n_features
    delta = table.td_errors(theta)[ids]
    rho = table.rho[ids]
    s = table.s[ids]
    flat = (np.arange(m)[:, None] * d + s).ravel()
    weighted = np.bincount(flat, weights=(rho * delta).ravel(), minlength=m * d).reshape(m, d)
    total = rho.sum(axis=1)
    bc = weighted / n
    wis = np.divide(weighted, total[:, None], out=np.full_like(weighted, np.nan), where=total[:, None] > 0)
    return {"wis": wis, "bc": bc, "rho_bar": total / n}


def bias_decay_study(table: TransitionTable, theta, n_list, m_buffers: int, rng) -> list:
    """Bias of IR (= bias of WIS-Optimal) and of BC-IR versus buffer size.

    The IR bias is estimated as the mean of E[X_IR|B] - E[X_BC|B] over
    buffers, which is unbiased because E[X_BC|B] has mean E_pi[Delta]
    exactly, and has far lower variance than E[X_IR|B] - E_pi[Delta].
    """
    target = table.expected_target_update(theta)
    rows = []
    for n in n_list:
        ids = table.sample((m_buffers, n), rng)
        st = buffer_statistics(table, ids, theta)
        ok = np.isfinite(st["wis"]).all(axis=1)
        diff = st["wis"][ok] - st["bc"][ok]
        bias_ir = diff.mean(axis=0)
        bc_err = st["bc"] - target
        rows.append({
            "n": n,
            "bias_ir": bias_ir,
            "bias_ir_norm": float(np.linalg.norm(bias_ir)),
            "bias_ir_se": diff.std(axis=0, ddof=1) / np.sqrt(ok.sum()),
            "bias_bc": bc_err.mean(axis=0),
            "bias_bc_se": bc_err.std(axis=0, ddof=1) / np.sqrt(m_buffers),
            "degenerate_buffers": int((~ok).sum()),
        })
    return rows
