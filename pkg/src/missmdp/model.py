"""Missingness-MDPs: factored states, observations with missing features,
indicator arithmetic and exact classification of missingness tables.

Conventions used throughout the package:

* features are indexed ``0..n-1``;
* a state is a tuple of ints, identified by its mixed-radix id;
* an observation is a tuple whose entries are ints or ``None`` (missing);
* an indicator vector ``r`` has ``r[i] = 1`` iff feature ``i`` is observed and
  is stored as the integer code ``sum(r[i] << i)``.
"""
from __future__ import annotations

import enum
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

MISSING = None

ROW_TOL = 1e-9
ZERO_TOL = 1e-15


class ModelError(ValueError):
    """Raised when a model or missingness table violates its invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Feature space, states, observations, indicators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpace:
    domains: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "domains", tuple(int(d) for d in self.domains))
        if len(self.domains) < 1:
            raise ModelError("a feature space needs at least one feature")
        if any(d < 1 for d in self.domains):
            raise ModelError(f"domain sizes must be >= 1, got {self.domains}")

    @property
    def n(self) -> int:
        return len(self.domains)

    @property
    def num_states(self) -> int:
        return math.prod(self.domains)

    @property
    def num_indicators(self) -> int:
        return 1 << self.n

    @property
    def num_observations(self) -> int:
        return math.prod(d + 1 for d in self.domains)

    @cached_property
    def _radix(self) -> np.ndarray:
        # feature 0 is the most significant digit
        r = np.ones(self.n, dtype=np.int64)
        for i in range(self.n - 2, -1, -1):
            r[i] = r[i + 1] * self.domains[i + 1]
        return r

    @cached_property
    def _obs_radix(self) -> np.ndarray:
        r = np.ones(self.n, dtype=np.int64)
        for i in range(self.n - 2, -1, -1):
            r[i] = r[i + 1] * (self.domains[i + 1] + 1)
        return r

    def encode(self, state: Sequence[int]) -> int:
        state = tuple(state)
        if len(state) != self.n:
            raise ModelError(f"state {state} has {len(state)} features, expected {self.n}")
        for v, d in zip(state, self.domains):
            if not 0 <= v < d:
                raise ModelError(f"state {state} is outside domains {self.domains}")
        return int(np.dot(state, self._radix))

    def decode(self, sid: int) -> tuple[int, ...]:
        if not 0 <= sid < self.num_states:
            raise ModelError(f"state id {sid} out of range [0, {self.num_states})")
        return tuple(int(v) for v in (sid // self._radix) % np.asarray(self.domains))

    @cached_property
    def state_matrix(self) -> np.ndarray:
        """All states as an ``(num_states, n)`` array, row ``k`` decoding id ``k``."""
        ids = np.arange(self.num_states, dtype=np.int64)
        return _readonly((ids[:, None] // self._radix) % np.asarray(self.domains))

    @cached_property
    def indicator_matrix(self) -> np.ndarray:
        """All indicator vectors as a ``(2**n, n)`` 0/1 array, row = code."""
        codes = np.arange(self.num_indicators)
        return _readonly(((codes[:, None] >> np.arange(self.n)) & 1).astype(np.int8))

    def observation_id(self, z: Sequence[int | None]) -> int:
        """Dense id of an observation; the missing symbol takes value ``domain``."""
        vals = [self.domains[i] if v is None else v for i, v in enumerate(z)]
        return int(np.dot(vals, self._obs_radix))

    def observation_ids(self, values: np.ndarray) -> np.ndarray:
        """Vectorised ``observation_id`` for an ``(..., n)`` array with ``-1`` for missing."""
        values = np.asarray(values)
        filled = np.where(values < 0, np.asarray(self.domains), values)
        return filled @ self._obs_radix

    @cached_property
    def emission_ids(self) -> np.ndarray:
        """``(num_states, 2**n)`` table: id of ``apply_indicator(s, r)``."""
        S = self.state_matrix
        R = self.indicator_matrix.astype(bool)
        vals = np.where(R[None, :, :], S[:, None, :], -1)
        return _readonly(self.observation_ids(vals))

    def validate_observation(self, z: Sequence[int | None]) -> None:
        if len(z) != self.n:
            raise ModelError(f"observation {tuple(z)} has {len(z)} features, expected {self.n}")
        for v, d in zip(z, self.domains):
            if v is not None and not 0 <= v < d:
                raise ModelError(f"observation {tuple(z)} is outside domains {self.domains}")


def admits(z: Sequence[int | None], s: Sequence[int]) -> bool:
    """True iff observation ``z`` could have been emitted by state ``s``."""
    if len(z) != len(s):
        raise ModelError(f"dimension mismatch: observation has {len(z)} features, state {len(s)}")
    return all(zi is None or zi == si for zi, si in zip(z, s))


def indicator_of(z: Sequence[int | None]) -> tuple[int, ...]:
    return tuple(0 if v is None else 1 for v in z)


def apply_indicator(s: Sequence[int], r: Sequence[int]) -> tuple[int | None, ...]:
    if len(s) != len(r):
        raise ModelError(f"dimension mismatch: state has {len(s)} features, indicator {len(r)}")
    return tuple(v if bit else None for v, bit in zip(s, r))


def indicator_code(r: Sequence[int]) -> int:
    return sum(int(bool(bit)) << i for i, bit in enumerate(r))


def indicator_from_code(code: int, n: int) -> tuple[int, ...]:
    return tuple((code >> i) & 1 for i in range(n))


def indicator_bits(r: Sequence[int] | int, n: int | None = None) -> str:
    """Render an indicator as the ``0/1`` string used in text files."""
    if isinstance(r, (int, np.integer)):
        r = indicator_from_code(int(r), n)
    return "".join(str(int(b)) for b in r)


def parse_indicator_bits(bits: str) -> tuple[int, ...]:
    if not bits or set(bits) - {"0", "1"}:
        raise ModelError(f"bad indicator bit string {bits!r}")
    return tuple(int(c) for c in bits)


def observation_to_array(z: Sequence[int | None]) -> np.ndarray:
    return np.array([-1 if v is None else v for v in z], dtype=np.int64)


def observation_from_array(values: Iterable[int]) -> tuple[int | None, ...]:
    return tuple(None if v < 0 else int(v) for v in values)


# ---------------------------------------------------------------------------
# Missingness tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MissingnessTable:
    """Per-state distribution over indicator vectors.

    ``probs[s, code]`` is the probability that state ``s`` emits the
    observation obtained by masking ``s`` with the indicator ``code``.
    """

    features: FeatureSpace
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        expected = (self.features.num_states, self.features.num_indicators)
        if probs.shape != expected:
            raise ModelError(f"missingness table has shape {probs.shape}, expected {expected}")
        probs[np.abs(probs) < ZERO_TOL] = 0.0
        object.__setattr__(self, "probs", _readonly(probs))

    @classmethod
    def from_rows(
        cls, features: FeatureSpace, rows: Mapping[int, Mapping[Sequence[int] | int, float]]
    ) -> "MissingnessTable":
        """Build from ``{state_id: {indicator: p}}``; indicators as tuples or codes."""
        probs = np.zeros((features.num_states, features.num_indicators))
        for s, dist in rows.items():
            for r, p in dist.items():
                code = r if isinstance(r, (int, np.integer)) else indicator_code(r)
                probs[s, code] += p
        return cls(features, probs)

    @classmethod
    def from_observations(
        cls, features: FeatureSpace, rows: Mapping[int, Mapping[Sequence[int | None], float]]
    ) -> "MissingnessTable":
        """Build from observation-level rows, rejecting non-admittable support."""
        violations = _observation_row_violations(features, rows)
        if violations:
            raise ModelError("; ".join(v.message for v in violations))
        return cls.from_rows(
            features, {s: {indicator_of(z): p for z, p in d.items()} for s, d in rows.items()}
        )

    @classmethod
    def from_function(cls, features: FeatureSpace, fn) -> "MissingnessTable":
        """``fn(state_tuple) -> {indicator_tuple: p}`` evaluated on every state."""
        probs = np.zeros((features.num_states, features.num_indicators))
        for sid in range(features.num_states):
            for r, p in fn(features.decode(sid)).items():
                probs[sid, indicator_code(r)] += p
        return cls(features, probs)

    def prob(self, s: int, r: Sequence[int] | int) -> float:
        code = r if isinstance(r, (int, np.integer)) else indicator_code(r)
        return float(self.probs[s, code])

    def observation_probability(self, z: Sequence[int | None], s: int) -> float:
        """``M(z | s)``: zero unless ``z`` is admittable by ``s``."""
        if not admits(z, self.features.decode(s)):
            return 0.0
        return float(self.probs[s, indicator_code(indicator_of(z))])

    def row(self, s: int) -> dict[tuple[int | None, ...], float]:
        state = self.features.decode(s)
        n = self.features.n
        return {
            apply_indicator(state, indicator_from_code(c, n)): float(p)
            for c, p in enumerate(self.probs[s])
            if p > ZERO_TOL
        }

    def missing_probability(self) -> np.ndarray:
        """``(num_states, n)``: probability that each feature is missing."""
        R = self.features.indicator_matrix
        return self.probs @ (1 - R)

    @cached_property
    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.probs, axis=1)
        c[:, -1] = np.maximum(c[:, -1], 1.0)
        return _readonly(c)

    def __eq__(self, other):
        if not isinstance(other, MissingnessTable):
            return NotImplemented
        return self.features == other.features and np.array_equal(self.probs, other.probs)

    __hash__ = None


# ---------------------------------------------------------------------------
# The miss-MDP
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MissMdp:
    """States, actions, sparse transitions, rewards, initial distribution, discount.

    ``transitions[a]`` is a CSR matrix with ``T[a][s, s'] = P(s' | s, a)``; a state
    without outgoing mass for ``a`` simply has an empty row.
    """

    features: FeatureSpace
    num_actions: int
    transitions: tuple[sp.csr_matrix, ...]
    rewards: np.ndarray
    initial: np.ndarray
    gamma: float
    terminal: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        S = self.features.num_states
        if self.num_actions < 1:
            raise ModelError("a model needs at least one action")
        if len(self.transitions) != self.num_actions:
            raise ModelError(f"{len(self.transitions)} transition matrices for {self.num_actions} actions")
        mats = []
        for a, T in enumerate(self.transitions):
            T = sp.csr_matrix(T, dtype=float)
            if T.shape != (S, S):
                raise ModelError(f"transition matrix for action {a} has shape {T.shape}, expected {(S, S)}")
            T.eliminate_zeros()
            T.sort_indices()
            mats.append(T)
        object.__setattr__(self, "transitions", tuple(mats))
        rewards = np.array(self.rewards, dtype=float)
        if rewards.shape != (S, self.num_actions):
            raise ModelError(f"rewards have shape {rewards.shape}, expected {(S, self.num_actions)}")
        object.__setattr__(self, "rewards", _readonly(rewards))
        init = np.array(self.initial, dtype=float)
        if init.shape != (S,):
            raise ModelError(f"initial distribution has shape {init.shape}, expected {(S,)}")
        object.__setattr__(self, "initial", _readonly(init))
        object.__setattr__(self, "terminal", frozenset(int(s) for s in self.terminal))
        if not 0.0 <= self.gamma < 1.0:
            raise ModelError(f"gamma must lie in [0, 1), got {self.gamma}")

    @classmethod
    def from_rows(
        cls,
        features: FeatureSpace,
        num_actions: int,
        transitions: Mapping[tuple[int, int], Mapping[int, float]],
        rewards: Mapping[tuple[int, int], float],
        initial: Mapping[int, float],
        gamma: float,
        terminal: Iterable[int] = (),
    ) -> "MissMdp":
        S = features.num_states
        data =[([], [], []) for _ in range(num_actions)]
        for (s, a), dist in transitions.items():
            if not 0 <= a < num_actions:
                raise ModelError(f"action {a} out of range")
            for s2, p in dist.items():
                data[a][0].append(s)
                data[a][1].append(s2)
                data[a][2].append(p)
        mats = tuple(
            sp.csr_matrix((v, (r, c)), shape=(S, S)) for r, c, v in data
        )
        R = np.zeros((S, num_actions))
        for (s, a), v in rewards.items():
            R[s, a] = v
        mu = np.zeros(S)
        for s, p in initial.items():
            mu[s] += p
        return cls(features, num_actions, mats, R, mu, gamma, frozenset(terminal))

    @property
    def num_states(self) -> int:
        return self.features.num_states

    @cached_property
    def terminal_mask(self) -> np.ndarray:
        m = np.zeros(self.num_states, dtype=bool)
        m[list(self.terminal)] = True
        return _readonly(m)

    @cached_property
    def absorbing_transitions(self) -> tuple[sp.csr_matrix, ...]:
        """Transitions with every terminal state turned into a self-loop."""
        if not self.terminal:
            return self.transitions
        keep = sp.diags((~self.terminal_mask).astype(float))
        loops = sp.diags(self.terminal_mask.astype(float))
        return tuple(sp.csr_matrix(keep @ T + loops) for T in self.transitions)

    @cached_property
    def absorbing_transitions_t(self) -> tuple[sp.csr_matrix, ...]:
        """Transposes of ``absorbing_transitions``, for predicting beliefs."""
        return tuple(sp.csr_matrix(T.T) for T in self.absorbing_transitions)

    @cached_property
    def absorbing_rewards(self) -> np.ndarray:
        """Rewards with terminal states earning nothing."""
        R = self.rewards.copy()
        R[self.terminal_mask] = 0.0
        return _readonly(R)

    @cached_property
    def reachable(self) -> np.ndarray:
        """Sorted ids of states reachable from ``supp(initial)`` (BFS)."""
        seen = np.zeros(self.num_states, dtype=bool)
        start = np.flatnonzero(self.initial > ZERO_TOL)
        seen[start] = True
        queue = deque(start.tolist())
        while queue:
            s = queue.popleft()
            for T in self.transitions:
                lo, hi = T.indptr[s], T.indptr[s + 1]
                for s2 in T.indices[lo:hi][T.data[lo:hi] > ZERO_TOL]:
                    if not seen[s2]:
                        seen[s2] = True
                        queue.append(int(s2))
        return _readonly(np.flatnonzero(seen))

    @cached_property
    def reachable_mask(self) -> np.ndarray:
        m = np.zeros(self.num_states, dtype=bool)
        m[self.reachable] = True
        return _readonly(m)

    @property
    def rho_max(self) -> float:
        """Largest absolute one-step reward (the scale used for truncation bounds)."""
        return float(np.abs(self.rewards).max()) if self.rewards.size else 0.0

    def successors(self, s: int, a: int) -> dict[int, float]:
        T = self.transitions[a]
        lo, hi = T.indptr[s], T.indptr[s + 1]
        return {int(j): float(p) for j, p in zip(T.indices[lo:hi], T.data[lo:hi])}

    @cached_property
    def _sampling_tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded successor ids and cumulative probabilities per ``s * A + a`` row."""
        S, A = self.num_states, self.num_actions
        width = max(1, max(int(np.diff(T.indptr).max(initial=0)) for T in self.transitions))
        succ = np.zeros((S * A, width), dtype=np.int64)
        cum = np.ones((S * A, width))
        for a, T in enumerate(self.transitions):
            for s in range(S):
                lo, hi = T.indptr[s], T.indptr[s + 1]
                k = hi - lo
                row = s * A + a
                if k == 0:
                    succ[row, :] = s
                    continue
                succ[row, :k] = T.indices[lo:hi]
                succ[row, k:] = T.indices[hi - 1]
                c = np.cumsum(T.data[lo:hi])
                cum[row, :k] = c
                cum[row, k - 1:] = max(c[-1], 1.0)
        return _readonly(succ), _readonly(cum)

    def sample_next(self, states: np.ndarray, actions: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF sampling of successors for arrays of states/actions/uniforms."""
        succ, cum = self._sampling_tables
        rows = np.asarray(states) * self.num_actions + np.asarray(actions)
        idx = (np.asarray(u)[:, None] >= cum[rows]).sum(axis=1)
        idx = np.minimum(idx, succ.shape[1] - 1)
        return succ[rows, idx]


def sample_indicators(M: MissingnessTable, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of indicator codes for arrays of states and uniforms."""
    cum = M.cumulative[np.asarray(states)]
    idx = (np.asarray(u)[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, M.features.num_indicators - 1)


# ---------------------------------------------------------------------------
# I_always and classification
# ---------------------------------------------------------------------------


def always_observed_indices(M: MissingnessTable) -> frozenset[int]:
    miss = M.missing_probability()
    return frozenset(int(i) for i in np.flatnonzero(np.all(miss <= ZERO_TOL, axis=0)))


class MissingnessType(enum.IntEnum):
    MCAR = 0
    SimpleMAR = 1
    MAR = 2
    MNAR = 3


@dataclass(frozen=True)
class MissingnessClass:
    kind: MissingnessType
    self_censoring: frozenset[int] = frozenset()

    def __str__(self):
        sc = ",".join(str(i + 1) for i in sorted(self.self_censoring))
        return f"{self.kind.name} self_censoring={{{sc}}}"


def _constant_within_groups(values: np.ndarray, keys: np.ndarray, tol: float) -> bool:
    """True iff ``values`` (rows) are equal within each group of identical ``keys`` rows."""
    if values.shape[0] == 0:
        return True
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    groups = inverse.max() + 1
    lo = np.full((groups,) + values.shape[1:], np.inf)
    hi = np.full((groups,) + values.shape[1:], -np.inf)
    np.minimum.at(lo, inverse, values)
    np.maximum.at(hi, inverse, values)
    return bool(np.all(hi - lo <= tol))


def is_mcar(M: MissingnessTable, tol: float = ROW_TOL) -> bool:
    return bool(np.all(M.probs.max(axis=0) - M.probs.min(axis=0) <= tol))


def is_simple_mar(M: MissingnessTable, tol: float = ROW_TOL) -> bool:
    always = sorted(always_observed_indices(M))
    keys = M.features.state_matrix[:, always]
    if not always:
        keys = np.zeros((M.features.num_states, 1), dtype=np.int64)
    return _constant_within_groups(M.probs, keys, tol)


def is_mar(M: MissingnessTable, tol: float = ROW_TOL) -> bool:
    fs = M.features
    S = fs.state_matrix
    for code in range(fs.num_indicators):
        observed = np.flatnonzero(fs.indicator_matrix[code])
        keys = S[:, observed] if observed.size else np.zeros((fs.num_states, 1), dtype=np.int64)
        if not _constant_within_groups(M.probs[:, code : code + 1], keys, tol):
            return False
    return True


def self_censoring_features(M: MissingnessTable, tol: float = ROW_TOL) -> frozenset[int]:
    """Features whose own value changes their missing probability, other features fixed."""
    fs = M.features
    miss = M.missing_probability()
    S = fs.state_matrix
    out = set()
    for i in range(fs.n):
        others = [j for j in range(fs.n) if j != i]
        keys = S[:, others] if others else np.zeros((fs.num_states, 1), dtype=np.int64)
        if not _constant_within_groups(miss[:, i : i + 1], keys, tol):
            out.add(i)
    return frozenset(out)


def classify_missingness(M: MissingnessTable, tol: float = ROW_TOL) -> MissingnessClass:
    sc = self_censoring_features(M, tol)
    if is_mcar(M, tol):
        kind = MissingnessType.MCAR
    elif is_simple_mar(M, tol):
        kind = MissingnessType.SimpleMAR
    elif is_mar(M, tol):
        kind = MissingnessType.MAR
    else:
        kind = MissingnessType.MNAR
    return MissingnessClass(kind, sc)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # "row-sum" | "negative" | "admittability" | "dangling" | "shape"
    message: str


def _observation_row_violations(features, rows) -> list[Violation]:
    out = []
    for s, dist in rows.items():
        state = features.decode(s)
        for z, p in dist.items():
            if p > ZERO_TOL and not admits(z, state):
                out.append(Violation("admittability", f"M({s}) supports {tuple(z)} not admittable by {state}"))
    return out


def validate_model(model: MissMdp, M=None) -> list[Violation]:
    """Collect every invariant violation of ``model`` (and ``M`` if given).

    ``M`` may be a :class:`MissingnessTable` or observation-level rows
    ``{state_id: {observation: p}}``; the latter are checked for admittability.
    An empty list means the pair is well formed.
    """
    out: list[Violation] = []
    if np.any(model.initial < 0):
        out.append(Violation("negative", "initial distribution has negative entries"))
    if abs(model.initial.sum() - 1.0) > ROW_TOL:
        out.append(Violation("row-sum", f"initial distribution sums to {model.initial.sum():.12g}"))
    reach = model.reachable_mask
    for a, T in enumerate(model.transitions):
        if T.nnz and T.data.min() < 0:
            out.append(Violation("negative", f"action {a} has negative transition probabilities"))
        sums = np.asarray(T.sum(axis=1)).ravel()
        empty = np.diff(T.indptr) == 0
        for s in np.flatnonzero(empty & reach):
            out.append(Violation("dangling", f"reachable state {s} has no transition row for action {a}"))
        for s in np.flatnonzero(~empty & (np.abs(sums - 1.0) > ROW_TOL)):
            out.append(Violation("row-sum", f"T({s}, {a}) sums to {sums[s]:.12g}"))
    if M is None:
        return out
    if not isinstance(M, MissingnessTable):
        out.extend(_observation_row_violations(model.features, M))
        if any(v.kind == "admittability" for v in out):
            return out
        M = MissingnessTable.from_observations(model.features, M)
    if M.features != model.features:
        out.append(Violation("shape", "missingness table is over a different feature space"))
        return out
    if np.any(M.probs < 0):
        out.append(Violation("negative", "missingness table has negative entries"))
    sums = M.probs.sum(axis=1)
    for s in np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL):
        out.append(Violation("row-sum", f"M({s}) sums to {sums[s]:.12g}"))
    return out


def check_model(model: MissMdp, M=None) -> None:
    """Raise :class:`ModelError` listing all violations, if any."""
    violations = validate_model(model, M)
    if violations:
        raise ModelError("; ".join(v.message for v in violations))


def enumerate_observations(features: FeatureSpace) -> Iterable[tuple[int | None, ...]]:
    return itertools.product(*[list(range(d)) + [None] for d in features.domains])
