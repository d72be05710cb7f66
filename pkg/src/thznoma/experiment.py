"""Seeded Monte Carlo runs over one swept parameter.

Every trial draws one network, builds the problem once and hands the same
instance to every requested solver, so solver comparisons are paired.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import brute_force, greedy_schedule
from .bb import BBConfig, run_bb, write_bound_history
from .channel import SystemConfig, sample_network
from .reformulation import build_active_set, build_problem
from .sca import SCAConfig, run_sca, write_trace

logger = logging.getLogger(__name__)

SWEEP_VARS = ("M", "K", "N", "N_Q", "r_S", "R_bar")
BASE_SOLVERS = ("bb", "sca1", "sca2", "greedy", "oracle")
BB_CAP = 20_000  # stands in for an unlimited iteration budget
TRIAL_FIELDS = ("seed", "sweep", "solver", "sum_rate_bpcu", "iterations",
                "wall_ms", "residual", "penalty_leak")

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master: int, sweep_idx: int, trial_idx: int) -> int:
    """Seed of one trial; depends only on its own indices, so adding sweep
    points or trials never changes existing ones."""
    h = splitmix64(int(master) & MASK64)
    h = splitmix64(h ^ (sweep_idx & MASK64))
    h = splitmix64(h ^ (trial_idx & MASK64))
    return h


def parse_solver(name: str) -> tuple[str, int | None]:
    """'bb', 'bb:200' or 'bb:cap' for BB; other solvers take no suffix."""
    base, _, arg = name.partition(":")
    if base not in BASE_SOLVERS:
        raise ValueError(f"unknown solver {name!r}; choose from {BASE_SOLVERS}")
    if not arg:
        return base, None
    if base != "bb":
        raise ValueError(f"only bb takes an iteration suffix, got {name!r}")
    if arg == "cap":
        return base, BB_CAP
    n_itr = int(arg)
    if n_itr < 1:
        raise ValueError(f"iteration cap must be >= 1 in {name!r}")
    return base, n_itr


@dataclass
class ExperimentSpec:
    base: SystemConfig = field(default_factory=SystemConfig)
    sweep_var: str = "M"
    sweep_values: list = field(default_factory=lambda: [1, 2, 4, 8])
    trials: int = 200
    solvers: list = field(default_factory=lambda: ["bb", "sca2", "greedy"])
    bb: dict = field(default_factory=dict)
    sca: dict = field(default_factory=dict)
    oracle_grid: int = 200
    seed: int = 0
    out: str = "results"
    parallel: int = 1
    traces: int = 0
    record_wall_time: bool = False
    name: str = "custom"

    def __post_init__(self):
        if isinstance(self.base, dict):
            self.base = SystemConfig.from_dict(self.base)
        self.sweep_values = list(self.sweep_values)
        self.solvers = list(self.solvers)
        self.validate()

    def validate(self) -> None:
        if self.sweep_var not in SWEEP_VARS:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARS}, got {self.sweep_var!r}")
        if not self.sweep_values:
            raise ValueError("sweep needs at least one value")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.solvers:
            raise ValueError("at least one solver is required")
        for s in self.solvers:
            parse_solver(s)
        if len(set(self.solvers)) != len(self.solvers):
            raise ValueError("duplicate solver entries")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")
        BBConfig(**self.bb)
        SCAConfig(**{k: v for k, v in self.sca.items() if k != "variant"})
        for v in self.sweep_values:
            self.config_for(v)

    def config_for(self, value) -> SystemConfig:
        cast = float if self.sweep_var in ("r_S", "R_bar") else int
        return self.base.replace(**{self.sweep_var: cast(value)})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base"] = self.base.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrialRecord:
    seed: int
    sweep: float
    solver: str
    sum_rate_bpcu: float
    iterations: int
    wall_ms: float
    residual: float
    penalty_leak: bool

    def row(self, with_time: bool) -> list:
        return [self.seed, _fmt(self.sweep), self.solver, _fmt(self.sum_rate_bpcu),
                self.iterations, _fmt(self.wall_ms) if with_time else "",
                _fmt(self.residual), int(self.penalty_leak)]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass
class _Task:
    spec: ExperimentSpec
    sweep_idx: int
    trial_idx: int


@dataclass
class TrialOutput:
    records: list
    traces: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


def _residual(alloc) -> float:
    r = alloc.rates
    if r is None:
        return 0.0
    return float(max(0.0, r.qos_residual, r.budget_residual))


def run_trial(task: _Task) -> TrialOutput:
    spec = task.spec
    value = spec.sweep_values[task.sweep_idx]
    cfg = spec.config_for(value)
    seed = trial_seed(spec.seed, task.sweep_idx, task.trial_idx)
    net = sample_network(cfg, np.random.default_rng(seed))
    g = net.gains
    active = build_active_set(g)
    pd = build_problem(g, active)
    keep_trace = task.trial_idx < spec.traces
    out = TrialOutput([], notes=list(net.notes))
    for name in spec.solvers:
        base, n_itr = parse_solver(name)
        t0 = time.perf_counter()
        try:
            if base == "bb":
                bb_kw = dict(spec.bb)
                if n_itr is not None:
                    bb_kw["N_itr"] = n_itr
                res = run_bb(pd, BBConfig(**bb_kw))
                alloc, iters = res.best_y, res.iterations
                if keep_trace:
                    out.traces[name] = res
            elif base in ("sca1", "sca2"):
                res = run_sca(pd, SCAConfig(**{**spec.sca, "variant": "I" if base == "sca1" else "II"}))
                alloc, iters = res.allocation, res.report.iterations
                if keep_trace:
                    out.traces[name] = res
            elif base == "greedy":
                alloc, iters = greedy_schedule(g, active), 1
            else:
                res = brute_force(g, active, spec.oracle_grid)
                alloc, iters = res.allocation, res.evaluated
            rate = alloc.sum_rate
            resid = _residual(alloc)
            leak = alloc.penalty_leak
        except Exception as exc:  # recorded, the sweep goes on
            logger.warning("solver %s failed on seed %d: %s", name, seed, exc)
            out.notes.append(f"{name} failed on seed {seed}: {exc}")
            rate, iters, resid, leak = math.nan, 0, math.nan, False
        wall = (time.perf_counter() - t0) * 1e3
        out.records.append(TrialRecord(seed, value, name, rate, iters, wall, resid, leak))
    return out


@dataclass
class SummaryRow:
    sweep: float
    solver: str
    n: int
    mean: float
    se: float
    mean_iterations: float
    leaks: int
    failures: int


@dataclass
class PairRow:
    sweep: float
    a: str
    b: str
    n: int
    mean_diff: float
    se_diff: float


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list
    summary: list
    pairs: list
    elapsed_s: float
    traces: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def mean(self, sweep, solver) -> float:
        return next(r.mean for r in self.summary if r.sweep == sweep and r.solver == solver)

    def pair(self, sweep, a, b) -> PairRow:
        return next(p for p in self.pairs if p.sweep == sweep and p.a == a and p.b == b)

    def rates(self, sweep, solver) -> np.ndarray:
        return np.array([r.sum_rate_bpcu for r in self.records
                         if r.sweep == sweep and r.solver == solver])


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = x[np.isfinite(x)]
    if x.size == 0:
        return math.nan, math.nan
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def aggregate(spec: ExperimentSpec, records: list) -> tuple[list, list]:
    summary, pairs = [], []
    for v in spec.sweep_values:
        by_solver = {}
        for s in spec.solvers:
            rows = [r for r in records if r.sweep == v and r.solver == s]
            x = np.array([r.sum_rate_bpcu for r in rows])
            m, se = _mean_se(x)
            its = np.array([r.iterations for r in rows], dtype=float)
            summary.append(SummaryRow(v, s, int(np.isfinite(x).sum()), m, se,
                                      float(np.mean(its)) if its.size else math.nan,
                                      sum(r.penalty_leak for r in rows),
                                      int((~np.isfinite(x)).sum())))
            by_solver[s] = {r.seed: r.sum_rate_bpcu for r in rows}
        for i, a in enumerate(spec.solvers):
            for b in spec.solvers[i + 1:]:
                seeds = sorted(set(by_solver[a]) & set(by_solver[b]))
                d = np.array([by_solver[a][k] - by_solver[b][k] for k in seeds])
                m, se = _mean_se(d)
                pairs.append(PairRow(v, a, b, int(np.isfinite(d).sum()), m, se))
    return summary, pairs


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    spec.validate()
    t0 = time.perf_counter()
    tasks = [_Task(spec, si, ti) for si in range(len(spec.sweep_values))
             for ti in range(spec.trials)]
    if spec.parallel > 1:
        with ProcessPoolExecutor(max_workers=spec.parallel) as pool:
            outputs = list(pool.map(run_trial, tasks, chunksize=max(1, len(tasks) // (8 * spec.parallel))))
    else:
        outputs = [run_trial(t) for t in tasks]
    records = [r for o in outputs for r in o.records]
    traces = {(t.sweep_idx, t.trial_idx): o.traces for t, o in zip(tasks, outputs) if o.traces}
    notes = sorted({n for o in outputs for n in o.notes})
    summary, pairs = aggregate(spec, records)
    return ExperimentResult(spec, records, summary, pairs, time.perf_counter() - t0, traces, notes)


def emit_outputs(result: ExperimentResult, path=None) -> dict:
    """Write trials.csv, summary.csv, pairwise.csv, manifest.json and any
    traces. Returns the written paths by role."""
    spec = result.spec
    if not spec.solvers:
        raise ValueError("no solvers in spec")
    out = Path(path if path is not None else spec.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        files["trials"] = out / "trials.csv"
        with open(files["trials"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRIAL_FIELDS)
            for r in result.records:
                w.writerow(r.row(spec.record_wall_time))
        files["timings"] = out / "timings.csv"
        with open(files["timings"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "sweep", "solver", "wall_ms"])
            for r in result.records:
                w.writerow([r.seed, _fmt(r.sweep), r.solver, f"{r.wall_ms:.3f}"])
        files["summary"] = out / "summary.csv"
        with open(files["summary"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep", "solver", "n", "mean_bpcu", "se_bpcu", "mean_iterations",
                        "penalty_leaks", "failures"])
            for s in result.summary:
                w.writerow([_fmt(s.sweep), s.solver, s.n, _fmt(s.mean), _fmt(s.se),
                            _fmt(s.mean_iterations), s.leaks, s.failures])
        files["pairwise"] = out / "pairwise.csv"
        with open(files["pairwise"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sweep", "solver_a", "solver_b", "n", "mean_diff_bpcu", "se_diff_bpcu"])
            for p in result.pairs:
                w.writerow([_fmt(p.sweep), p.a, p.b, p.n, _fmt(p.mean_diff), _fmt(p.se_diff)])
        for (si, ti), solvers in sorted(result.traces.items()):
            tdir = out / "traces"
            tdir.mkdir(exist_ok=True)
            for name, res in solvers.items():
                tag = f"{name.replace(':', '-')}_sweep{si}_trial{ti}.csv"
                p = tdir / tag
                if name.startswith("bb"):
                    write_bound_history(res, p)
                else:
                    write_trace(res, p)
                files[f"trace:{tag}"] = p
        with open(files["trials"], "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        manifest = {
            "spec": spec.to_dict(),
            "version": __version__,
            "elapsed_s": result.elapsed_s,
            "trials_sha256": digest,
            "bb_cap_label": {"cap": BB_CAP},
            "notes": result.notes,
        }
        files["manifest"] = out / "manifest.json"
        with open(files["manifest"], "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
    except OSError as exc:
        raise OSError(f"writing results under {out}: {exc}") from exc
    return files


def spec_from_manifest(path) -> ExperimentSpec:
    with open(path) as fh:
        return ExperimentSpec.from_dict(json.load(fh)["spec"])


# -- presets ---------------------------------------------------------------------

def preset(name: str, **overrides) -> ExperimentSpec:
    """Named experiments for the standard sweeps and the iteration-cap table."""
    rs = overrides.pop("r_S", None)
    rbar = overrides.pop("R_bar", None)
    base_kw = {}
    if rs is not None:
        base_kw["r_S"] = float(rs)
    if rbar is not None:
        base_kw["R_bar"] = float(rbar)
    if name == "table1":
        kw = dict(base=SystemConfig(N=10, K=4, N_Q=10, **base_kw), sweep_var="M",
                  sweep_values=[1, 2, 4, 6, 8], solvers=["bb:cap", "bb:200"])
    elif name == "fig1":
        kw = dict(base=SystemConfig(N=10, K=4, N_Q=10, **base_kw), sweep_var="M",
                  sweep_values=[1, 2, 4, 6, 8], solvers=["bb:200", "sca1", "sca2", "greedy"])
    elif name == "fig2":
        base_kw.setdefault("r_S", 5.0)
        base_kw.setdefault("R_bar", 2.5)
        kw = dict(base=SystemConfig(N=10, K=4, M=8, N_Q=10, **base_kw), sweep_var="M",
                  sweep_values=[8], trials=2, traces=2, solvers=["bb:200", "sca2"])
    elif name == "fig3":
        kw = dict(base=SystemConfig(N=10, M=4, N_Q=10, **base_kw), sweep_var="K",
                  sweep_values=[2, 3, 4, 5, 6], solvers=["bb:200", "sca1", "sca2", "greedy"])
    elif name == "fig4":
        kw = dict(base=SystemConfig(K=4, M=4, N_Q=10, **base_kw), sweep_var="N",
                  sweep_values=[10, 20, 30, 40], solvers=["bb:200", "sca1", "sca2", "greedy"])
    elif name == "fig5":
        kw = dict(base=SystemConfig(N=10, K=4, M=4, **base_kw), sweep_var="N_Q",
                  sweep_values=[10, 20, 30, 40], solvers=["bb:200", "sca1", "sca2", "greedy"])
    else:
        raise ValueError(f"unknown preset {name!r}")
    kw["name"] = name
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec(**kw)


def default_parallel() -> int:
    return max(1, min(8, os.cpu_count() or 1))
