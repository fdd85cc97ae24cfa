"""Benchmark generators: an ICU treatment model and a predator-prey grid.

Neither environment's dynamics are published in full, so both are
reconstructions that keep the qualitative structure:

ICU
    features ``(infection, test_recency, temperature, heart_rate)``.
    Infection worsens stochastically and antibiotics push it down; a test
    resets ``test_recency`` to 0, and only right after a test is the infection
    level likely to be revealed.  Temperature and heart rate are noisy readings
    of the infection level.  Temperature and test recency are always observed;
    heart rate goes missing at a constant rate.

Predator
    features ``(pred_x, pred_y, prey_x, prey_y)`` on a grid.  The predator moves
    in four directions (with slip), the prey mostly flees.  Catching the prey
    is terminal and pays 1.  The prey's coordinates go missing jointly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .evaluation import wtv
from .learn import aimi_fixed_point
from .mgraph import MGraph
from .model import FeatureSpace, MissingnessTable, MissMdp

ENVIRONMENTS = ("icu", "predator")
VARIANTS = ("mcar", "smar", "mnar_id", "mnar_unid")

ICU_DOMAINS = {"full": (4, 5, 4, 10), "desk": (3, 3, 3, 4)}
PREDATOR_GRID = {"full": (5, 5), "desk": (3, 3)}
PREDATOR_MCAR_GRID = {"full": (10, 5), "desk": (4, 3)}

PRESETS = {
    "icu-smar": ("icu", "smar"),
    "icu-mnar-id": ("icu", "mnar_id"),
    "icu-mnar-unid": ("icu", "mnar_unid"),
    "pred-mcar": ("predator", "mcar"),
    "pred-smar": ("predator", "smar"),
    "pred-mnar-unid": ("predator", "mnar_unid"),
}


@dataclass(frozen=True)
class BenchSpec:
    """Which benchmark to build.

    ``domains`` (ICU) or ``grid`` (Predator) override the scale presets.
    ``params`` overrides individual numeric constants of the construction.
    """

    environment: str
    variant: str
    scale: str = "desk"
    domains: tuple | None = None
    grid: tuple | None = None
    gamma: float = 0.95
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.environment not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.environment!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.scale not in ("full", "desk"):
            raise ValueError(f"scale must be 'full' or 'desk', got {self.scale!r}")
        if self.environment == "icu" and self.variant == "mcar":
            raise ValueError("the ICU benchmark has no MCAR variant")
        if self.environment == "predator" and self.variant == "mnar_id":
            raise ValueError("the predator benchmark has no identifiable-MNAR variant")


@dataclass(frozen=True, eq=False)
class Benchmark:
    spec: BenchSpec
    model: MissMdp
    M: MissingnessTable
    graph: MGraph


def preset(name: str, scale: str = "desk", **kwargs) -> BenchSpec:
    try:
        env, variant = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return BenchSpec(env, variant, scale, **kwargs)


def build(spec: BenchSpec) -> Benchmark:
    fn = build_icu if spec.environment == "icu" else build_predator
    return Benchmark(spec, *fn(spec))


def prior_missingness(features: FeatureSpace | MissMdp, p: float = 0.5) -> MissingnessTable:
    """Every feature goes missing independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    fs = features.features if isinstance(features, MissMdp) else features
    R = fs.indicator_matrix
    row = np.prod(np.where(R == 1, 1.0 - p, p), axis=1)
    return MissingnessTable(fs, np.tile(row, (fs.num_states, 1)))


def identifiability_gap(model: MissMdp, M: MissingnessTable, graph: MGraph | None = None) -> float:
    """WTV between ``M`` and the population limit of AIMI's estimate."""
    return wtv(aimi_fixed_point(model, M, graph), M, model)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _noisy_reading(level: np.ndarray, levels: int, size: int, sharpness: float, floor: float) -> np.ndarray:
    """``(levels, size)`` distributions of a reading centred on the scaled level."""
    centre = level * (size - 1) / max(levels - 1, 1)
    dist = np.abs(np.arange(size)[None, :] - centre[:, None])
    w = np.exp(-sharpness * dist) + floor
    return w / w.sum(axis=1, keepdims=True)


def _rows_to_csr(rows: dict, S: int) -> sp.csr_matrix:
    r, c, v = [], [], []
    for s, (cols, probs) in rows.items():
        r.extend([s] * len(cols))
        c.extend(cols)
        v.extend(probs)
    return sp.csr_matrix((v, (r, c)), shape=(S, S))


# ---------------------------------------------------------------------------
# ICU
# ---------------------------------------------------------------------------

ICU_DEFAULTS = dict(
    onset=0.05,  # P(a healthy patient becomes infected)
    worsen=0.3,  # P(infection +1) without antibiotics, once infected
    recover=0.05,  # P(infection -1) without antibiotics
    treat_down=0.7,  # P(infection -1) with antibiotics
    treat_up=0.05,
    infection_cost=1.0,  # per unit of normalised infection
    antibiotics_cost=0.6,
    test_cost=0.15,
    reading_sharpness=0.5,  # readings are weak evidence of the infection level
    reading_floor=0.3,
    hr_missing=0.3,
    base_reveal=0.05,  # P(infection observed) without a fresh test
)

WAIT, ANTIBIOTICS, TEST = 0, 1, 2


def _icu_dynamics(fs: FeatureSpace, P: dict, gamma: float) -> MissMdp:
    dI, dT, dTe, dH = fs.domains
    S = fs.num_states
    states = fs.state_matrix
    temp_dist = _noisy_reading(np.arange(dI), dI, dTe, P["reading_sharpness"], P["reading_floor"])
    hr_dist = _noisy_reading(np.arange(dI), dI, dH, P["reading_sharpness"], P["reading_floor"])
    mats, rewards = [], np.zeros((S, 3))
    for a in (WAIT, ANTIBIOTICS, TEST):
        up, down = (P["treat_up"], P["treat_down"]) if a == ANTIBIOTICS else (P["worsen"], P["recover"])
        rows = {}
        for s in range(S):
            I, T = states[s, 0], states[s, 1]
            pI = np.zeros(dI)
            if I == 0 and a != ANTIBIOTICS:
                up = P["onset"]
            pI[min(I + 1, dI - 1)] += up
            pI[max(I - 1, 0)] += down
            pI[I] += 1.0 - up - down
            T2 = 0 if a == TEST else min(T + 1, dT - 1)
            joint = pI[:, None, None] * temp_dist[:, :, None] * hr_dist[:, None, :]
            I2, Te2, H2 = np.nonzero(joint > 0)
            cols = fs._radix @ np.array([I2, np.full_like(I2, T2), Te2, H2])
            rows[s] = (cols.tolist(), joint[I2, Te2, H2].tolist())
            cost = P["antibiotics_cost"] * (a == ANTIBIOTICS) + P["test_cost"] * (a == TEST)
            rewards[s, a] = -P["infection_cost"] * I / max(dI - 1, 1) - cost
        mats.append(_rows_to_csr(rows, S))
    # start mildly infected or healthy, untested, readings drawn from the infection level
    mu = np.zeros(S)
    for I0, w in ((0, 0.5), (min(1, dI - 1), 0.5)):
        for te in range(dTe):
            for h in range(dH):
                mu[fs.encode((I0, dT - 1, te, h))] += w * temp_dist[I0, te] * hr_dist[I0, h]
    return MissMdp(fs, 3, tuple(mats), rewards, mu, gamma)


def build_icu(spec: BenchSpec) -> tuple[MissMdp, MissingnessTable, MGraph]:
    P = {**ICU_DEFAULTS, **spec.params}
    fs = FeatureSpace(spec.domains or ICU_DOMAINS[spec.scale])
    if fs.n != 4:
        raise ValueError("the ICU benchmark has exactly four features")
    dI, dT, dTe, dH = fs.domains
    model = _icu_dynamics(fs, P, spec.gamma)
    v = spec.variant

    def reveal(state):
        I, T, te, h = state
        if T != 0:
            return P["base_reveal"]
        if v == "smar":  # a hotter patient yields a conclusive test more often
            return 0.5 + 0.4 * te / max(dTe - 1, 1)
        if v == "mnar_id":  # depends on the (missable) heart rate
            return 0.5 + 0.4 * h / max(dH - 1, 1)
        # severe infections are easier to confirm, modulated by heart rate
        return (0.15 + 0.8 * I / max(dI - 1, 1)) * (0.6 + 0.4 * h / max(dH - 1, 1))

    def row(state):
        q = reveal(state)
        h = P["hr_missing"]
        # indicator order (I, T, temp, HR); T and temp always observed
        return {
            (1, 1, 1, 1): q * (1 - h),
            (1, 1, 1, 0): q * h,
            (0, 1, 1, 1): (1 - q) * (1 - h),
            (0, 1, 1, 0): (1 - q) * h,
        }

    M = MissingnessTable.from_function(fs, row)
    s_edges = {(1, 0)} | ({(2, 0)} if v == "smar" else {(3, 0)})
    selfc = frozenset()
    if v == "mnar_unid":
        s_edges.add((0, 0))
        selfc = frozenset({0})
    graph = MGraph(4, frozenset({1, 2}), frozenset(s_edges), frozenset(), selfc)
    return model, M, graph


# ---------------------------------------------------------------------------
# Predator
# ---------------------------------------------------------------------------

PREDATOR_DEFAULTS = dict(
    slip=0.1,  # predator stays put instead of moving
    flee=0.8,  # prey moves away (uniformly among distance-increasing moves)
    mcar_missing=0.4,
    plains_missing=0.15,
    mountain_missing=0.75,  # predator on a mountain cell loses sight of the prey
    jungle_missing=0.85,  # prey in a jungle cell is hidden
    open_missing=0.15,
)

MOVES = ((0, 1), (0, -1), (1, 0), (-1, 0))  # north, south, east, west


def mountain_cells(W: int, H: int) -> np.ndarray:
    """``(W, H)`` boolean biome map: a diagonal band of mountains."""
    x, y = np.meshgrid(np.arange(W), np.arange(H), indexing="ij")
    return (x + 2 * y) % 3 == 1


def jungle_cells(W: int, H: int) -> np.ndarray:
    """``(W, H)`` boolean biome map: jungle away from the predator's corner."""
    x, y = np.meshgrid(np.arange(W), np.arange(H), indexing="ij")
    return (x + y) % 2 == 1


def _prey_moves(px, py, x, y, W, H, flee):
    """Distribution over prey positions given the predator at ``(px, py)``."""
    d0 = abs(px - x) + abs(py - y)
    away = []
    for dx, dy in MOVES:
        nx, ny = x + dx, y + dy
        if 0 <= nx < W and 0 <= ny < H and abs(px - nx) + abs(py - ny) > d0:
            away.append((nx, ny))
    if not away:
        return {(x, y): 1.0}
    out = {(x, y): 1.0 - flee}
    for c in away:
        out[c] = out.get(c, 0.0) + flee / len(away)
    return out


def _predator_dynamics(fs: FeatureSpace, P: dict, gamma: float) -> MissMdp:
    W, H = fs.domains[0], fs.domains[1]
    S = fs.num_states
    terminal = frozenset(fs.encode((u, v, u, v)) for u in range(W) for v in range(H))
    mats = []
    rewards = np.zeros((S, 4))
    for a, (dx, dy) in enumerate(MOVES):
        rows = {}
        for s in range(S):
            u, v, x, y = fs.decode(s)
            if s in terminal:
                rows[s] = ([s], [1.0])
                continue
            dist: dict = {}
            moved = (min(max(u + dx, 0), W - 1), min(max(v + dy, 0), H - 1))
            for (pu, pv), pp in ((moved, 1.0 - P["slip"]), ((u, v), P["slip"])):
                if (pu, pv) == (x, y):
                    key = fs.encode((pu, pv, x, y))
                    dist[key] = dist.get(key, 0.0) + pp
                    continue
                for (nx, ny), pq in _prey_moves(pu, pv, x, y, W, H, P["flee"]).items():
                    key = fs.encode((pu, pv, nx, ny))
                    dist[key] = dist.get(key, 0.0) + pp * pq
            rows[s] = (list(dist), list(dist.values()))
            rewards[s, a] = sum(p for k, p in dist.items() if k in terminal)
        mats.append(_rows_to_csr(rows, S))
    mu = np.zeros(S)
    cells = [(x, y) for x in range(W) for y in range(H) if (x, y) != (0, 0)]
    for x, y in cells:
        mu[fs.encode((0, 0, x, y))] = 1.0 / len(cells)
    return MissMdp(fs, 4, tuple(mats), rewards, mu, gamma, terminal)


def build_predator(spec: BenchSpec) -> tuple[MissMdp, MissingnessTable, MGraph]:
    P = {**PREDATOR_DEFAULTS, **spec.params}
    table = PREDATOR_MCAR_GRID if spec.variant == "mcar" else PREDATOR_GRID
    W, H = spec.grid or table[spec.scale]
    fs = FeatureSpace((W, H, W, H))
    model = _predator_dynamics(fs, P, spec.gamma)
    mountains, jungle = mountain_cells(W, H), jungle_cells(W, H)
    v = spec.variant

    def row(state):
        u, w, x, y = state
        if v == "mcar":
            p = P["mcar_missing"]
        elif v == "smar":
            p = P["mountain_missing"] if mountains[u, w] else P["plains_missing"]
        else:
            p = P["jungle_missing"] if jungle[x, y] else P["open_missing"]
        return {(1, 1, 1, 1): 1.0 - p, (1, 1, 0, 0): p}

    M = MissingnessTable.from_function(fs, row)
    s_edges: set = set()
    selfc = frozenset()
    if v == "smar":
        s_edges = {(0, 2), (1, 2)}
    elif v == "mnar_unid":
        s_edges = {(2, 2), (3, 2)}
        selfc = frozenset({2})
    graph = MGraph(4, frozenset({0, 1}), frozenset(s_edges), frozenset({(2, 3)}), selfc)
    return model, M, graph


__all__ = [
    "Benchmark",
    "BenchSpec",
    "PRESETS",
    "build",
    "build_icu",
    "build_predator",
    "identifiability_gap",
    "jungle_cells",
    "mountain_cells",
    "preset",
    "prior_missingness",
]
