"""Config-driven experiments: learning curves, sensitivity sweeps and variance studies.

Each run owns its environment, buffer, learner and random streams. Streams
come from ``SeedSequence(master_seed, spawn_key=(run,))`` so a run's data
does not depend on which other runs execute, or in what order. All
estimators share the run's streams, so for a given run index they see the
same behavior trajectory (on-policy excepted, which follows the target).
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .approx import TabularFeatures, TileCoder
from .core import ratio_table
from .environments import make_env, make_policy
from .estimators import ESTIMATOR_NAMES, EstimatorKind, make_estimator, per_transition_deltas
from .exceptions import ConfigError, NonFiniteUpdate
from .learner import OffPolicyLearner
from .oracle import (TrueValues, closed_form_variances, dp_true_values, empirical_update_variance,
                     rollout_true_values)

log = logging.getLogger(__name__)

RUN_COLUMNS = ["estimator", "alpha", "interval", "run", "seed", "step", "error", "skipped", "ess", "updates"]
SUMMARY_COLUMNS = ["estimator", "alpha", "interval", "step", "mean_error", "stderr", "runs"]
SWEEP_COLUMNS = ["estimator", "alpha", "interval", "mave", "stderr", "runs", "diverged_runs"]
VARIANCE_COLUMNS = ["checkpoint", "step", "update", "estimator", "closed_form", "empirical", "empirical_se",
                    "ess", "value_error"]


class NumericAbort(RuntimeError):
    """A run produced a non-finite update and the config asks to abort."""


# ---------------------------------------------------------------------------
# config


@lru_cache(maxsize=1)
def config_schema() -> dict:
    return json.loads(resources.files("imresample").joinpath("schema/experiment.schema.json").read_text())


@dataclass
class ExperimentConfig:
    name: str
    env: dict
    behavior: str
    target: str
    estimators: list
    capacity: int
    batch_size: int
    total_interactions: int
    learning_rates: list
    steps_between_updates: list = field(default_factory=lambda: [1])
    policy_seed: int = 0
    optimizer: dict = field(default_factory=lambda: {"kind": "constant"})
    incremental: bool = False
    runs: int = 1
    metric_every: int = 100
    warmup: int | None = None
    seed: int = 0
    out_dir: str = "results"
    workers: int = 1
    on_nonfinite: str = "record"
    truth: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    variance_study: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, config_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from exc
        raw = copy.deepcopy(raw)
        raw.pop("description", None)
        if isinstance(raw.get("steps_between_updates"), int):
            raw["steps_between_updates"] = [raw["steps_between_updates"]]
        if isinstance(raw.get("learning_rates"), (int, float)):
            raw["learning_rates"] = [raw["learning_rates"]]
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self) -> None:
        if self.env.get("kind") not in ("chain", "fourrooms", "cont_fourrooms"):
            raise ConfigError(f"unknown env kind {self.env.get('kind')!r}")
        if not self.estimators:
            raise ConfigError("estimator list is empty")
        for spec in self.estimators:
            name = spec if isinstance(spec, str) else spec.get("kind")
            if name not in ESTIMATOR_NAMES:
                raise ConfigError(f"unknown estimator {name!r}")
            if isinstance(spec, dict) and not spec.get("learning_rates", [1]):
                raise ConfigError(f"empty learning-rate grid for {name}")
        if not self.learning_rates or not self.steps_between_updates:
            raise ConfigError("learning-rate and update-interval grids must be nonempty")
        if self.capacity < self.batch_size or self.batch_size < 1:
            raise ConfigError("need capacity >= batch_size >= 1")
        if self.total_interactions < 0 or self.runs < 1 or self.metric_every < 1:
            raise ConfigError("total_interactions >= 0, runs >= 1 and metric_every >= 1 required")
        if any(i < 1 for i in self.steps_between_updates):
            raise ConfigError("steps between updates must be positive")
        if self.on_nonfinite not in ("record", "abort"):
            raise ConfigError("on_nonfinite must be 'record' or 'abort'")
        try:
            problem(self.problem_key())
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot build the problem: {exc}") from exc
        self.resolved_estimators()

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def problem_key(self) -> str:
        keys = ("env", "behavior", "target", "policy_seed", "truth", "features")
        return json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True)

    def resolved_estimators(self) -> list:
        """(estimator, learning-rate grid) pairs.

        A config entry may carry its own ``learning_rates``; V-trace may give
        ``clip_rho_max``, a clip expressed as a fraction of the largest ratio.
        """
        out = []
        rmax = problem(self.problem_key()).rho_max
        for spec in self.estimators:
            alphas = self.learning_rates
            if isinstance(spec, dict):
                spec = dict(spec)
                alphas = spec.pop("learning_rates", alphas)
                if "clip_rho_max" in spec:
                    spec["clip"] = float(spec.pop("clip_rho_max")) * rmax
            try:
                out.append((make_estimator(spec), list(alphas)))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad estimator entry {spec!r}: {exc}") from exc
        return out


# ---------------------------------------------------------------------------
# problem definition (environment + policies + ground truth)


@dataclass
class Problem:
    env_kind: str
    env_params: dict
    behavior: object
    target: object
    featurizer: object
    truth: TrueValues
    eval_idx: np.ndarray
    eval_pi: np.ndarray
    rho_table: np.ndarray | None
    rho_max: float
    n_actions: int

    def make_env(self, rng):
        return make_env(self.env_kind, rng=rng, **self.env_params)

    def ratio(self, s, a) -> float:
        if self.rho_table is not None:
            return float(self.rho_table[s, a])
        p = self.target.probs(s)[a]
        return 0.0 if p == 0.0 else float(p / self.behavior.probs(s)[a])


@lru_cache(maxsize=16)
def problem(key: str) -> Problem:
    spec = json.loads(key)
    env_spec = dict(spec["env"])
    kind = env_spec.pop("kind")
    params = env_spec.pop("params", {})
    env = make_env(kind, rng=0, **params)
    seed = spec["policy_seed"]
    mu = make_policy(spec["behavior"], env, seed=seed)
    pi = make_policy(spec["target"], env, seed=seed)
    truth_spec = spec.get("truth") or {}
    if kind in ("chain", "fourrooms"):
        feat = TabularFeatures(env.n_states)
        states = np.arange(env.n_states)
        mu_t, pi_t = mu.table(states), pi.table(states)
        rho_t = ratio_table(pi_t, mu_t)
        v = dp_true_values(env.model(), pi_t, threshold=truth_spec.get("threshold", 1e-15))
        ev = env.eval_states
        truth = TrueValues(ev, v[ev], None, "dp")
        return Problem(kind, params, mu, pi, feat, truth, feat.indices_batch(ev), pi_t[ev], rho_t,
                       float(rho_t.max()), env.n_actions)
    fspec = spec.get("features") or {}
    feat = TileCoder([0.0, 0.0], env.size, fspec.get("tilings", 64), fspec.get("tiles", 8))
    truth = continuous_truth(env, mu, pi, spec)
    probe_pi = pi.probs_batch(truth.states)
    return Problem(kind, params, mu, pi, feat, truth, feat.indices_batch(truth.states), probe_pi, None,
                   region_rho_max(pi, mu), env.n_actions)


def region_rho_max(pi, mu) -> float:
    """Largest ratio for a state-independent target against a region-based behavior."""
    origin = np.zeros(2)
    target = pi.probs(origin)
    rows = [mu._default] + [p for _, p in mu.regions] if hasattr(mu, "regions") else [mu.probs(origin)]
    return float(ratio_table(np.tile(target, (len(rows), 1)), np.array(rows)).max())


def probe_states(env, mu, n_probes: int, burn_in: int, seed: int) -> np.ndarray:
    """States visited by the behavior policy, subsampled with a fixed seed."""
    rng = np.random.default_rng(seed)
    env.rng = rng
    env.reset()
    visited = []
    for _ in range(burn_in + n_probes * 10):
        visited.append(np.array(env.state))
        env.step(mu.sample(env.state, rng))
    visited = np.array(visited[burn_in:])
    return visited[rng.choice(len(visited), size=n_probes, replace=False)]


def truth_cache_key(spec: dict) -> str:
    """Hash of everything the true values depend on (env, policies, seeds, truth settings)."""
    keep = {k: spec[k] for k in ("env", "behavior", "target", "policy_seed")}
    keep["truth"] = {k: v for k, v in (spec.get("truth") or {}).items() if k != "cache_dir"}
    return hashlib.sha256(json.dumps(keep, sort_keys=True).encode()).hexdigest()[:16]


def continuous_truth(env, mu, pi, spec: dict) -> TrueValues:
    """Rollout values at a fixed probe set, read from / written to ``truth.cache_dir`` when given."""
    tspec = spec.get("truth") or {}
    seed = tspec.get("seed", 0)
    cache = None
    if tspec.get("cache_dir"):
        cache = Path(tspec["cache_dir"]) / f"{spec['env']['kind']}_{truth_cache_key(spec)}.csv"
        if cache.exists():
            return TrueValues.from_csv(cache, provenance="rollout-cache")
    probes = probe_states(env, mu, tspec.get("probes", 100), tspec.get("burn_in", 100), seed)
    truth = rollout_true_values(env, pi, probes, tspec.get("rollouts", 100), tspec.get("horizon"),
                                np.random.default_rng(seed + 1))
    if cache:
        cache.parent.mkdir(parents=True, exist_ok=True)
        truth.to_csv(cache)
    return truth


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunResult:
    estimator: str
    alpha: float
    interval: int
    run: int
    seed: int
    steps: np.ndarray
    errors: np.ndarray
    skipped: np.ndarray
    ess: np.ndarray
    updates: np.ndarray
    update_slots: int
    diverged: bool = False

    @property
    def mave(self) -> float:
        return float(np.mean(self.errors)) if len(self.errors) else float("nan")


def run_streams(master_seed: int, run: int):
    ss = np.random.SeedSequence(master_seed, spawn_key=(run,))
    env_ss, act_ss, learn_ss = ss.spawn(3)
    return (int(ss.generate_state(1)[0]), np.random.default_rng(env_ss), np.random.default_rng(act_ss),
            np.random.default_rng(learn_ss))


def run_single(cfg: ExperimentConfig, est: EstimatorKind, alpha: float, interval: int, run: int,
               checkpoint_every: int | None = None, on_checkpoint=None) -> RunResult:
    """One learning run.

    With ``checkpoint_every``, ``on_checkpoint(step, learner)`` is called
    before every ``checkpoint_every``-th update (starting with the initial
    weights); returning False ends the run early.
    """
    prob = problem(cfg.problem_key())
    seed, env_rng, act_rng, learn_rng = run_streams(cfg.seed, run)
    env = prob.make_env(env_rng)
    onpolicy = est.name == "onpolicy"
    behavior = prob.target if onpolicy else prob.behavior
    learner = OffPolicyLearner(est, prob.featurizer, capacity=cfg.capacity, batch_size=cfg.batch_size,
                               learning_rate=alpha, optimizer=cfg.optimizer.get("kind", "constant"),
                               optimizer_params={k: v for k, v in cfg.optimizer.items() if k != "kind"},
                               incremental=cfg.incremental, target_policy=prob.target,
                               n_actions=prob.n_actions, rng=learn_rng)
    T = cfg.total_interactions
    every = cfg.metric_every
    n_rec = T // every + 1 if T > 0 else 0
    steps = np.zeros(n_rec, dtype=np.int64)
    errors = np.zeros(n_rec)
    skipped = np.zeros(n_rec, dtype=np.int64)
    ess = np.zeros(n_rec)
    updates = np.zeros(n_rec, dtype=np.int64)
    truth = prob.truth.values
    diverged = False
    slots = 0
    rec = 0
    warm = cfg.warmup

    def record(step):
        nonlocal rec
        steps[rec] = step
        if diverged:
            errors[rec] = np.inf
        else:
            v = learner.values_from_indices(prob.eval_idx, prob.eval_pi)
            errors[rec] = float(np.mean(np.abs(v - truth)))
        skipped[rec] = learner.skipped
        buf = learner.buffer
        ess[rec] = buf.effective_sample_size() if buf.count and buf.total_weight() > 0 else 0.0
        updates[rec] = learner.n_updates
        rec += 1

    if n_rec:
        record(0)
    ratio = prob.ratio
    for step in range(1, T + 1):
        s = env.state
        a = behavior.sample(s, act_rng)
        t = env.step(a, 1.0 if onpolicy else ratio(s, a))
        learner.observe(t)
        if step % interval == 0:
            slots += 1
            if not diverged and learner.ready(warm):
                if checkpoint_every and learner.n_updates % checkpoint_every == 0:
                    if not on_checkpoint(step, learner):
                        break
                try:
                    learner.update()
                except NonFiniteUpdate as exc:
                    if cfg.on_nonfinite == "abort":
                        raise NumericAbort(f"{est.label} alpha={alpha} run={run} step={step}: {exc}") from exc
                    log.info("run diverged: %s alpha=%g run=%d step=%d", est.label, alpha, run, step)
                    diverged = True
        if step % every == 0:
            record(step)
    return RunResult(est.label, alpha, interval, run, seed, steps[:rec], errors[:rec], skipped[:rec], ess[:rec],
                     updates[:rec], slots, diverged)


def _job(args):
    cfg_dict, est, alpha, interval, run = args
    return run_single(ExperimentConfig.from_dict(cfg_dict), est, alpha, interval, run)


def execute(cfg: ExperimentConfig, jobs: list) -> list:
    """Run (estimator, alpha, interval, run) jobs, in a process pool when workers > 1."""
    args = [(cfg.to_dict(), *j) for j in jobs]
    if cfg.workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_job, args, chunksize=max(1, len(args) // (4 * cfg.workers))))
    return [run_single(cfg, *j) for j in jobs]


# ---------------------------------------------------------------------------
# aggregation and output


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def stderr(values) -> float:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        return 0.0
    if not np.all(np.isfinite(v)):
        return float("nan")
    return float(v.std(ddof=1) / math.sqrt(len(v)))


def summarize_curves(results: list) -> list:
    """Per (estimator, alpha, interval, step): mean error and standard error over runs."""
    groups = {}
    for r in results:
        groups.setdefault((r.estimator, r.alpha, r.interval), []).append(r)
    rows = []
    for (name, alpha, interval), rs in sorted(groups.items()):
        rs = sorted(rs, key=lambda r: r.run)
        err = np.array([r.errors for r in rs])
        for j, step in enumerate(rs[0].steps):
            col = err[:, j]
            rows.append([name, alpha, interval, int(step), float(np.mean(col)), stderr(col), len(rs)])
    return rows


def summarize_sweep(results: list) -> list:
    groups = {}
    for r in results:
        groups.setdefault((r.estimator, r.alpha, r.interval), []).append(r)
    rows = []
    for (name, alpha, interval), rs in sorted(groups.items()):
        m = [r.mave for r in rs]
        rows.append([name, alpha, interval, float(np.mean(m)), stderr(m), len(rs),
                     sum(r.diverged for r in rs)])
    return rows


def write_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([x if isinstance(x, str) else _fmt(x) for x in row])


def run_rows(results: list) -> list:
    rows = []
    for r in sorted(results, key=lambda r: (r.estimator, r.alpha, r.interval, r.run)):
        for j in range(len(r.steps)):
            rows.append([r.estimator, r.alpha, r.interval, r.run, r.seed, int(r.steps[j]), float(r.errors[j]),
                         int(r.skipped[j]), float(r.ess[j]), int(r.updates[j])])
    return rows


def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(cfg: ExperimentConfig, out: Path, kind: str, files: list, results: list) -> None:
    manifest = {
        "experiment": cfg.name,
        "command": kind,
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "master_seed": cfg.seed,
        "run_seeds": sorted({(r.run, r.seed) for r in results}),
        "git_revision": git_revision(),
        "files": files,
        "update_accounting": sorted({(r.estimator, r.interval, r.update_slots) for r in results}),
        "expected_update_slots": {str(i): cfg.total_interactions // i for i in cfg.steps_between_updates},
        "diverged_runs": sum(r.diverged for r in results),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


# ---------------------------------------------------------------------------
# experiment entry points


def _grid_jobs(cfg, intervals=None, alphas=None):
    jobs = []
    for est, est_alphas in cfg.resolved_estimators():
        for alpha in (alphas if alphas is not None else est_alphas):
            for interval in (intervals if intervals is not None else cfg.steps_between_updates):
                for run in range(cfg.runs):
                    jobs.append((est, float(alpha), int(interval), run))
    return jobs


def run_learning_curve(cfg: ExperimentConfig, write: bool = True) -> list:
    """Learning curves for every estimator x learning rate x update interval in the config."""
    results = execute(cfg, _grid_jobs(cfg))
    if write:
        out = Path(cfg.out_dir) / cfg.name
        files = []
        by_est = {}
        for r in results:
            by_est.setdefault(r.estimator, []).append(r)
        for label, rs in sorted(by_est.items()):
            write_csv(out / f"{label}.csv", RUN_COLUMNS, run_rows(rs))
            write_csv(out / f"{label}_summary.csv", SUMMARY_COLUMNS, summarize_curves(rs))
            files += [f"{label}.csv", f"{label}_summary.csv"]
        write_manifest(cfg, out, "run", files, results)
    return results


def run_sensitivity_sweep(cfg: ExperimentConfig, grid: dict | None = None, write: bool = True) -> list:
    """MAVE per grid point (learning rate x update interval), with standard errors over runs."""
    grid = grid or {}
    results = execute(cfg, _grid_jobs(cfg, grid.get("steps_between_updates"), grid.get("learning_rates")))
    rows = summarize_sweep(results)
    if write:
        out = Path(cfg.out_dir) / cfg.name
        write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
        write_manifest(cfg, out, "sweep", ["sweep.csv"], results)
    return rows


def best_alpha(rows: list, estimator: str, interval: int | None = None):
    """(alpha, mave) with the lowest MAVE for an estimator in sweep rows."""
    cand = [r for r in rows if r[0] == estimator and (interval is None or r[2] == interval)]
    best = min(cand, key=lambda r: (r[3] if np.isfinite(r[3]) else np.inf, r[1]))
    return best[1], best[3]


def usable_range(rows: list, estimator: str, tolerance: float = 0.1, interval: int | None = None) -> int:
    """Number of grid learning rates whose MAVE is within ``tolerance`` of the estimator's best."""
    cand = [r for r in rows if r[0] == estimator and (interval is None or r[2] == interval)]
    best = min(r[3] for r in cand)
    return sum(1 for r in cand if np.isfinite(r[3]) and r[3] <= best * (1 + tolerance))


def run_variance_study(cfg: ExperimentConfig, write: bool = True) -> list:
    """Update variances of several estimators along the weight sequence of WIS-Optimal.

    At every ``checkpoint_every`` updates the (weights, buffer) pair of a
    WIS-Optimal run is frozen and each estimator's trace variance is
    estimated from ``n_draws`` mini-batches, next to its closed form where
    one exists. Updates start once the buffer is full unless
    ``variance_study.warmup`` says otherwise. ``cfg.variance_study`` keys:
    ``estimators``, ``checkpoint_every``, ``n_checkpoints``, ``n_draws``,
    ``learning_rate``, ``warmup``, ``total_interactions``, ``run``.
    """
    vs = {"estimators": ["ir", "bcir", "is", "wis_minibatch", "wis_optimal"], "checkpoint_every": 10,
          "n_checkpoints": 10, "n_draws": 10_000, "run": 0} | dict(cfg.variance_study)
    if cfg.env["kind"] == "cont_fourrooms":
        raise ConfigError("the variance study needs a tabular environment")
    prob = problem(cfg.problem_key())
    alpha = float(vs.get("learning_rate", cfg.learning_rates[0]))
    k = cfg.batch_size
    draw_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(vs["run"], 1)))
    rows = []

    def on_checkpoint(step, learner):
        buf, vf = learner.buffer, learner.vf
        cf = closed_form_variances(buf.live_rho(), per_transition_deltas(buf, vf.theta), k)
        err = float(np.mean(np.abs(vf.values_from_indices(prob.eval_idx) - prob.truth.values)))
        ess = buf.effective_sample_size()
        closed = {"is": cf["v_is"], "bcir": cf["v_bc"], "ir": cf.get("v_ir"), "wis_optimal": 0.0}
        cp = len(rows) // len(vs["estimators"])
        for name in vs["estimators"]:
            emp, se = empirical_update_variance(buf, vf, k, name, vs["n_draws"], draw_rng, return_se=True)
            c = closed.get(name)
            rows.append([cp, step, learner.n_updates, name, float("nan") if c is None else c, emp, se, ess, err])
        return cp + 1 < vs["n_checkpoints"]

    vcfg = copy.deepcopy(cfg)
    vcfg.warmup = vs.get("warmup", cfg.capacity)
    interval = cfg.steps_between_updates[0]
    vcfg.total_interactions = vs.get("total_interactions", vcfg.warmup + interval * (
        vs["checkpoint_every"] * vs["n_checkpoints"] + 1))
    res = run_single(vcfg, EstimatorKind("wis_optimal"), alpha, interval, vs["run"],
                     checkpoint_every=vs["checkpoint_every"], on_checkpoint=on_checkpoint)
    if write:
        out = Path(cfg.out_dir) / cfg.name
        write_csv(out / "variance.csv", VARIANCE_COLUMNS, rows)
        write_manifest(cfg, out, "variance", ["variance.csv"], [res])
    return rows


def build_oracle(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Compute (or load cached) true values and write them as CSV under ``<out>/oracle``."""
    spec = json.loads(cfg.problem_key())
    prob = problem(cfg.problem_key())
    out = Path(out_dir or cfg.out_dir) / "oracle" / f"{cfg.env['kind']}_{truth_cache_key(spec)}.csv"
    if not out.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
        prob.truth.to_csv(out)
    return out
