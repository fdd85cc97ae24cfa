"""Seeded experiment sweeps: datasets of growing size, learners, planning, evaluation.

Every cell ``(seed, dataset_size, learner)`` derives its random streams from
the master seed and its own coordinates only, so results do not depend on the
number of workers, on which learners are run, or on the order cells finish.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .bench import PRESETS, Benchmark, build, preset, prior_missingness
from .evaluation import (
    DegenerateNormalization,
    MetricsRow,
    atv,
    format_report,
    normalize_value,
    rollout_value,
    wtv,
)
from .learn import DEFAULT_KAPPA, learn
from .pac import certify, learner_keys
from .plan import SolveConfig, solve_point_based
from .simulate import generate_dataset

DEFAULT_SIZES = (10, 50, 100, 500, 1_000, 5_000, 10_000, 100_000)
LEARNERS = ("amcar", "asmar", "aimi")
OPTIMAL, PRIOR = "optimal", "prior"


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "icu-smar"
    scale: str = "desk"
    sizes: tuple = DEFAULT_SIZES
    learners: tuple = ("asmar", "aimi")
    seeds: int = 20
    master_seed: int = 0
    kappa: float = DEFAULT_KAPPA
    delta: float = 0.95
    episodes: int = 2000
    evaluate: bool = True  # False: learning metrics only, no planning
    aimi_graph: bool = False  # give AIMI the benchmark's m-graph as knowledge
    exact_sizes: bool = True  # cut the last trajectory so |D| equals the ladder size
    solver: SolveConfig = field(default_factory=lambda: SolveConfig(epsilon_target=0.01, max_beliefs=100))
    workers: int = 1
    out: str = "results"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "learners", tuple(self.learners))
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
            raise ValueError("sizes must be positive and strictly increasing")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if set(self.learners) - set(LEARNERS):
            raise ValueError(f"unknown learners {sorted(set(self.learners) - set(LEARNERS))}")
        if self.episodes < 1 or self.workers < 1:
            raise ValueError("episodes and workers must be >= 1")


def _parse_list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def load_config(text: str) -> ExperimentConfig:
    """Read an INI file with ``[experiment]`` and optional ``[solver]`` sections."""
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if not cp.has_section("experiment"):
        raise ValueError("config needs an [experiment] section")
    sec = cp["experiment"]
    kwargs: dict = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name == "solver" or f.name not in sec:
            continue
        raw = sec[f.name]
        if f.name == "sizes":
            kwargs[f.name] = tuple(int(float(v)) for v in _parse_list(raw))
        elif f.name == "learners":
            kwargs[f.name] = tuple(_parse_list(raw))
        elif f.name in ("evaluate", "aimi_graph", "exact_sizes"):
            kwargs[f.name] = sec.getboolean(f.name)
        elif f.name in ("seeds", "master_seed", "episodes", "workers"):
            kwargs[f.name] = sec.getint(f.name)
        elif f.name in ("kappa", "delta"):
            kwargs[f.name] = sec.getfloat(f.name)
        else:
            kwargs[f.name] = raw.strip()
    unknown = set(sec) - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
    if cp.has_section("solver"):
        base = ExperimentConfig.__dataclass_fields__["solver"].default_factory()
        sol = {}
        for f in dataclasses.fields(SolveConfig):
            if f.name in cp["solver"]:
                sol[f.name] = type(getattr(base, f.name) if f.name != "time_budget" else 0.0)(
                    cp["solver"][f.name]
                )
        kwargs["solver"] = dataclasses.replace(base, **sol)
    return ExperimentConfig(**kwargs)


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------

_DATASET, _SOLVER, _EVAL = 0, 1, 2


def dataset_seed(cfg: ExperimentConfig, seed: int, size: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.master_seed, _DATASET, seed, size])


def solver_seed(cfg: ExperimentConfig, seed: int) -> int:
    """Shared by every policy of one seed, so equal models yield equal policies."""
    ss = np.random.SeedSequence([cfg.master_seed, _SOLVER, seed])
    return int(ss.generate_state(1)[0])


def eval_seed(cfg: ExperimentConfig, seed: int) -> np.random.SeedSequence:
    """Shared by every policy of one seed: common random numbers across cells."""
    return np.random.SeedSequence([cfg.master_seed, _EVAL, seed])


# ---------------------------------------------------------------------------
# Cells
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _benchmark(name: str, scale: str) -> Benchmark:
    return build(preset(name, scale))


def _evaluate(cfg: ExperimentConfig, bench: Benchmark, M_plan, seed: int):
    solver = dataclasses.replace(cfg.solver, seed=solver_seed(cfg, seed))
    policy = solve_point_based(bench.model, M_plan, solver)
    return rollout_value(bench.model, bench.M, policy, cfg.episodes, eval_seed(cfg, seed), M_belief=M_plan)


def anchor_values(cfg: ExperimentConfig, seed: int) -> tuple[float, float, float, float]:
    """Rollout mean and CI of the optimal and the prior policy for one seed."""
    bench = _benchmark(cfg.preset, cfg.scale)
    opt = _evaluate(cfg, bench, bench.M, seed)
    pri = _evaluate(cfg, bench, prior_missingness(bench.model), seed)
    return opt.mean, opt.ci95, pri.mean, pri.ci95


def _learn(cfg: ExperimentConfig, bench: Benchmark, D, learner: str):
    if learner == "aimi" and cfg.aimi_graph:
        return learn(D, learner, cfg.kappa, graph=bench.graph)
    return learn(D, learner, cfg.kappa)


def _pac_epsilon(cfg: ExperimentConfig, bench: Benchmark, L) -> float:
    c = L.counts
    if c.mode == "aimi":
        keys = learner_keys(bench.model, "aimi", parents=c.conditioning)
    else:
        keys = learner_keys(bench.model, c.mode, always=c.conditioning)
    return certify(c, cfg.delta, keys=keys).global_epsilon


def run_cell(cfg: ExperimentConfig, seed: int, size: int, learner: str, anchors=None) -> MetricsRow:
    """One ``(seed, size, learner)`` cell; failures become a row with a status message."""
    bench = _benchmark(cfg.preset, cfg.scale)
    try:
        rng = np.random.default_rng(dataset_seed(cfg, seed, size))
        D = generate_dataset(bench.model, bench.M, size, rng, exact=cfg.exact_sizes)
        L = _learn(cfg, bench, D, learner)
        a, w = atv(L, bench.M, bench.model), wtv(L, bench.M, bench.model)
        eps = _pac_epsilon(cfg, bench, L)
        if not cfg.evaluate:
            return MetricsRow(seed, size, learner, a, w, pac_epsilon=eps)
        r = _evaluate(cfg, bench, L.table, seed)
        norm, status = math.nan, "ok"
        if anchors is not None:
            try:
                norm = normalize_value(r.mean, anchors[2], anchors[0])
            except DegenerateNormalization as exc:
                status = f"unnormalized: {exc}"
        return MetricsRow(seed, size, learner, a, w, r.mean, r.ci95, norm, eps, status)
    except Exception as exc:  # recorded per row; the sweep continues
        return MetricsRow(seed, size, learner, status=f"error: {type(exc).__name__}: {exc}")


def _anchor_rows(seed: int, anchors) -> list[MetricsRow]:
    om, oc, pm, pc = anchors
    try:
        on, pn = normalize_value(om, pm, om), normalize_value(pm, pm, om)
        status = "ok"
    except DegenerateNormalization as exc:
        on = pn = math.nan
        status = f"unnormalized: {exc}"
    return [
        MetricsRow(seed, 0, OPTIMAL, 0.0, 0.0, om, oc, on, math.nan, status),
        MetricsRow(seed, 0, PRIOR, math.nan, math.nan, pm, pc, pn, math.nan, status),
    ]


def _anchor_job(args):
    return anchor_values(*args)


def _cell_job(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig) -> list[MetricsRow]:
    """All rows of a sweep, sorted by ``(seed, dataset_size, learner)``."""
    seeds = range(cfg.seeds)
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    mapper = pool.map if pool else map
    try:
        anchors = {}
        if cfg.evaluate:
            anchors = dict(zip(seeds, mapper(_anchor_job, [(cfg, s) for s in seeds])))
        jobs = [
            (cfg, s, n, learner, anchors.get(s))
            for s in seeds
            for n in cfg.sizes
            for learner in cfg.learners
        ]
        rows = list(mapper(_cell_job, jobs))
    finally:
        if pool:
            pool.shutdown()
    for s, anc in anchors.items():
        rows.extend(_anchor_rows(s, anc))
    return sorted(rows, key=lambda r: (r.seed, r.dataset_size, r.learner))


def cmd_experiment(cfg: ExperimentConfig) -> Path:
    """Run the sweep and write ``report.csv`` under ``cfg.out``."""
    rows = run_experiment(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.csv"
    path.write_text(format_report(rows))
    return path


def medians(rows, learner: str, field_name: str) -> dict[int, float]:
    """Median of ``field_name`` per dataset size for one learner (NaNs ignored)."""
    out = {}
    for size in sorted({r.dataset_size for r in rows if r.learner == learner}):
        vals = [getattr(r, field_name) for r in rows if r.learner == learner and r.dataset_size == size]
        vals = [v for v in vals if not math.isnan(v)]
        out[size] = float(np.median(vals)) if vals else math.nan
    return out


__all__ = [
    "DEFAULT_SIZES",
    "ExperimentConfig",
    "anchor_values",
    "cmd_experiment",
    "load_config",
    "medians",
    "run_cell",
    "run_experiment",
]
