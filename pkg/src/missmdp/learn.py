"""Learning missingness tables from histories: AMCAR, AsMAR and AIMI.

All learners count observations exactly, add ``kappa`` to every counter cell
(numerators and denominators alike) and return a :class:`LearnedMissingness`
whose table is defined on every state of the feature space.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mgraph import MGraph, implied_learner_assumptions
from .model import FeatureSpace, MissingnessTable, MissMdp
from .simulate import Dataset

DEFAULT_KAPPA = 0.1


@dataclass(frozen=True, eq=False)
class CountTable:
    """Exact occurrence counters of one learner run.

    ``mode`` is ``"amcar"``, ``"asmar"`` or ``"aimi"``.  Row ``k`` of ``counts``
    belongs to ``keys[k]``; columns are indicator codes (AMCAR/AsMAR) or the
    binary indicator ``r_i`` (AIMI).  For AsMAR a key is the tuple of values of
    the conditioning features; for AIMI it is ``(i, values-of-parents)``.
    """

    mode: str
    keys: tuple
    counts: np.ndarray
    conditioning: tuple = ()  # AsMAR: conditioning features; AIMI: parents per feature

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def processes_per_key(self) -> int:
        """Independent Bernoulli estimates per key; a binary outcome needs one."""
        return 1 if self.counts.shape[1] <= 2 else self.counts.shape[1]

    def as_dict(self) -> dict:
        return {k: self.counts[i].copy() for i, k in enumerate(self.keys)}


@dataclass(frozen=True, eq=False)
class LearnedMissingness:
    table: MissingnessTable
    algorithm: str
    kappa: float
    dataset_size: int
    always: frozenset[int]
    counts: CountTable
    unvisited: frozenset = field(default_factory=frozenset)  # keys with zero raw count


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def estimate_always_observed(D: Dataset) -> frozenset[int]:
    if D.size == 0:
        raise ValueError("cannot estimate always-observed features from an empty dataset")
    seen_missing = np.any(D.observations < 0, axis=0)
    return frozenset(int(i) for i in np.flatnonzero(~seen_missing))


def _key_index(values: np.ndarray, domains: list[int]) -> np.ndarray:
    """Mixed-radix index of rows of ``values`` over the given domains."""
    idx = np.zeros(values.shape[0], dtype=np.int64)
    for col, d in enumerate(domains):
        idx = idx * d + values[:, col]
    return idx


def _key_tuples(domains: list[int]) -> tuple:
    if not domains:
        return ((),)
    grids = np.indices(domains).reshape(len(domains), -1).T
    return tuple(tuple(int(v) for v in row) for row in grids)


def _normalise(counts: np.ndarray, kappa: float, what: str) -> np.ndarray:
    num = counts + kappa
    den = num.sum(axis=-1, keepdims=True)
    if np.any(den == 0):
        raise ValueError(f"{what}: zero counts with kappa=0 leave rows undefined")
    return num / den


def _check_kappa(kappa: float) -> None:
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")


# ---------------------------------------------------------------------------
# AMCAR / AsMAR
# ---------------------------------------------------------------------------


def asmar_counts(D: Dataset, conditioning: frozenset[int] | set[int]) -> CountTable:
    """Counts ``#(s, r)`` keyed by the values of the ``conditioning`` features.

    Observations missing any conditioning feature are skipped; with the
    conditioning set equal to the always-observed features none are.
    """
    fs = D.features
    cond = sorted(conditioning)
    doms = [fs.domains[i] for i in cond]
    keys = _key_tuples(doms)
    counts = np.zeros((len(keys), fs.num_indicators), dtype=np.int64)
    if D.size:
        vals = D.observations[:, cond]
        ok = np.all(vals >= 0, axis=1)
        k = _key_index(vals[ok], doms)
        np.add.at(counts, (k, D.indicator_codes[ok]), 1)
    mode = "asmar" if cond else "amcar"
    return CountTable(mode, keys, counts, tuple(cond))


def learn_amcar(D: Dataset, kappa: float = DEFAULT_KAPPA) -> LearnedMissingness:
    """State-independent frequencies of indicator vectors."""
    _check_kappa(kappa)
    if D.size == 0 and kappa == 0:
        raise ValueError("AMCAR: empty dataset with kappa=0")
    counts = asmar_counts(D, frozenset())
    row = _normalise(counts.counts[0].astype(float), kappa, "AMCAR")
    fs = D.features
    table = MissingnessTable(fs, np.tile(row, (fs.num_states, 1)))
    unvisited = frozenset(counts.keys[i] for i in np.flatnonzero(counts.totals == 0))
    always = estimate_always_observed(D) if D.size else frozenset()
    return LearnedMissingness(table, "amcar", kappa, D.size, always, counts, unvisited)


def learn_asmar(
    D: Dataset, kappa: float = DEFAULT_KAPPA, always: frozenset[int] | set[int] | None = None
) -> LearnedMissingness:
    """AsMAR: indicator frequencies conditioned on the always-observed features.

    ``always`` overrides the estimated always-observed set, e.g. to drop
    features known not to influence missingness.
    """
    _check_kappa(kappa)
    fs = D.features
    est = estimate_always_observed(D)
    cond = frozenset(est if always is None else always)
    counts = asmar_counts(D, cond)
    unvisited = frozenset(counts.keys[i] for i in np.flatnonzero(counts.totals == 0))
    rows = _normalise(counts.counts.astype(float), kappa, "AsMAR")
    cols = sorted(cond)
    k = _key_index(fs.state_matrix[:, cols], [fs.domains[i] for i in cols]) if cols else np.zeros(fs.num_states, dtype=np.int64)
    table = MissingnessTable(fs, rows[k])
    return LearnedMissingness(table, "asmar", kappa, D.size, est, counts, unvisited)


# ---------------------------------------------------------------------------
# AIMI
# ---------------------------------------------------------------------------


def _select_parents(n, graph, assume, seen_missing):
    if assume not in (None, "smar", "mcar"):
        raise ValueError(f"unknown assumption {assume!r}")
    parents: list[tuple[int, ...] | None] = []
    for i in range(n):
        if graph is not None and i in graph.always:
            parents.append(None)
            continue
        if graph is not None:
            cand = {j for j, k in graph.s_edges if k == i and j != i}
        else:
            cand = {j for j in range(n) if j != i}
        if assume == "smar":
            cand -= set(seen_missing)
        elif assume == "mcar":
            cand = set()
        parents.append(tuple(sorted(cand)))
    return tuple(parents)


def aimi_parents(
    features: FeatureSpace,
    D: Dataset | None = None,
    graph: MGraph | None = None,
    assume: str | None = None,
) -> tuple[tuple[int, ...] | None, ...]:
    """Conditioning features for every feature's counter; ``None`` = never missing.

    ``assume`` is ``None`` (condition on all other features), ``"smar"`` (drop
    features seen missing in ``D``) or ``"mcar"`` (no conditioning).  A graph
    restricts to the S-parents of each R-node and marks declared
    always-observed features as never missing.
    """
    seen_missing = ()
    if assume == "smar":
        if D is None:
            raise ValueError("the simple-MAR assumption needs the dataset")
        seen_missing = set(range(features.n)) - estimate_always_observed(D)
    return _select_parents(features.n, graph, assume, seen_missing)


def aimi_counts(D: Dataset, parents) -> CountTable:
    """``#(s, i, r_i)`` keyed by ``(i, values of i's parents)``.

    An observation counts towards feature ``i`` only if all parents of ``i``
    are observed; their values select the key.
    """
    fs = D.features
    keys, blocks = [], []
    for i, par in enumerate(parents):
        if par is None:
            continue
        doms = [fs.domains[j] for j in par]
        sub = _key_tuples(doms)
        block = np.zeros((len(sub), 2), dtype=np.int64)
        if D.size:
            vals = D.observations[:, list(par)]
            ok = np.all(vals >= 0, axis=1)
            k = _key_index(vals[ok], doms)
            ri = (D.observations[ok, i] >= 0).astype(np.int64)
            np.add.at(block, (k, ri), 1)
        keys.extend((i, t) for t in sub)
        blocks.append(block)
    counts = np.concatenate(blocks) if blocks else np.zeros((0, 2), dtype=np.int64)
    return CountTable("aimi", tuple(keys), counts, tuple(parents))


def _product_table(fs: FeatureSpace, counts: CountTable, ratio_blocks) -> np.ndarray:
    S = fs.state_matrix
    R = fs.indicator_matrix
    probs = np.ones((fs.num_states, fs.num_indicators))
    blocks = iter(ratio_blocks)
    for i, par in enumerate(counts.conditioning):
        if par is None:
            probs *= R[:, i][None, :]  # never missing
            continue
        ratios = next(blocks)  # [:, 0] missing, [:, 1] observed
        doms = [fs.domains[j] for j in par]
        k = _key_index(S[:, list(par)], doms) if par else np.zeros(fs.num_states, dtype=np.int64)
        p_obs = ratios[k, 1]
        probs *= np.where(R[:, i][None, :] == 1, p_obs[:, None], 1.0 - p_obs[:, None])
    return probs


def aimi_table(features: FeatureSpace, counts: CountTable, kappa: float) -> np.ndarray:
    """Product of per-feature observed/missing ratios for every (state, indicator)."""
    blocks, offset = [], 0
    for i, par in enumerate(counts.conditioning):
        if par is None:
            continue
        size = int(np.prod([features.domains[j] for j in par])) if par else 1
        block = counts.counts[offset : offset + size].astype(float)
        offset += size
        blocks.append(_normalise(block, kappa, f"AIMI feature {i + 1}"))
    return _product_table(features, counts, blocks)


def learn_aimi(
    D: Dataset,
    kappa: float = DEFAULT_KAPPA,
    graph: MGraph | None = None,
    assume: str | None = None,
) -> LearnedMissingness:
    """AIMI: product of independently learned per-feature missingness probabilities."""
    _check_kappa(kappa)
    if graph is not None:
        if graph.n != D.features.n:
            raise ValueError("graph and dataset disagree on the number of features")
        flags = implied_learner_assumptions(graph)
        if not flags.indicators_independent or flags.self_censoring:
            raise ValueError("AIMI needs a graph with independent indicators and no self-censoring")
    parents = aimi_parents(D.features, D, graph, assume)
    counts = aimi_counts(D, parents)
    probs = aimi_table(D.features, counts, kappa)
    unvisited = frozenset(counts.keys[i] for i in np.flatnonzero(counts.totals == 0))
    est = estimate_always_observed(D) if D.size else frozenset()
    return LearnedMissingness(MissingnessTable(D.features, probs), "aimi", kappa, D.size, est, counts, unvisited)


def learn(D: Dataset, algorithm: str, kappa: float = DEFAULT_KAPPA, **kwargs) -> LearnedMissingness:
    fn = {"amcar": learn_amcar, "asmar": learn_asmar, "aimi": learn_aimi}.get(algorithm)
    if fn is None:
        raise ValueError(f"unknown learner {algorithm!r}")
    return fn(D, kappa, **kwargs)


def observation_probability(Mhat: MissingnessTable | LearnedMissingness, z, s: int) -> float:
    table = Mhat.table if isinstance(Mhat, LearnedMissingness) else Mhat
    return table.observation_probability(z, s)


# ---------------------------------------------------------------------------
# Population-level AIMI fixed point (used to certify misspecification gaps)
# ---------------------------------------------------------------------------


def visitation_weights(model: MissMdp, horizon: int | None = None) -> np.ndarray:
    """Expected visits per state of one uniformly random trajectory of ``horizon`` steps."""
    from .simulate import model_horizon

    L = model_horizon(model) if horizon is None else horizon
    A = model.num_actions
    T = sum(model.transitions) / A
    d = model.initial.copy()
    total = np.zeros_like(d)
    live = ~model.terminal_mask
    for _ in range(L):
        total += d
        d = (T.T @ (d * live))
    return total


def aimi_fixed_point(
    model: MissMdp,
    M: MissingnessTable,
    graph: MGraph | None = None,
    assume: str | None = None,
    horizon: int | None = None,
) -> MissingnessTable:
    """Limit of AIMI's estimate as the number of trajectories grows (kappa = 0).

    Counters are replaced by their expectations under uniformly random
    trajectories; conditioning keys never reached get probability 1/2.
    """
    fs = model.features
    R = fs.indicator_matrix
    w = visitation_weights(model, horizon)
    mass = w[:, None] * M.probs  # expected emissions per (state, indicator)
    seen_missing = np.flatnonzero(np.any(M.missing_probability() > 0, axis=0))
    parents = _select_parents(fs.n, graph, assume, seen_missing.tolist())
    blocks = []
    for i, par in enumerate(parents):
        if par is None:
            continue
        doms = [fs.domains[j] for j in par]
        block = np.zeros((int(np.prod(doms)) if doms else 1, 2))
        # an emission from state s counts for key(s) when all parents are observed
        k = _key_index(fs.state_matrix[:, list(par)], doms) if par else np.zeros(fs.num_states, dtype=np.int64)
        parents_seen = np.all(R[:, list(par)] == 1, axis=1) if par else np.ones(len(R), dtype=bool)
        for bit in (0, 1):
            np.add.at(block[:, bit], k, mass[:, parents_seen & (R[:, i] == bit)].sum(axis=1))
        tot = block.sum(axis=1, keepdims=True)
        blocks.append(np.where(tot > 0, block / np.where(tot > 0, tot, 1.0), 0.5))
    counts = CountTable("aimi", (), np.zeros((0, 2)), parents)
    return MissingnessTable(fs, _product_table(fs, counts, blocks))
