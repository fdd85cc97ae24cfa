"""Trajectory sampling under a behaviour policy, datasets and occurrence counts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import (
    FeatureSpace,
    MissingnessTable,
    MissMdp,
    ModelError,
    observation_from_array,
    observation_to_array,
    sample_indicators,
)

TRUNCATION_TOL = 1e-3


def horizon_for(gamma: float, rho_max: float, tol: float = TRUNCATION_TOL) -> int:
    """Smallest ``L >= 0`` with ``gamma**L * rho_max / (1 - gamma) < tol``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if rho_max <= 0 or tol <= 0:
        raise ValueError("rho_max and tol must be positive")

    def tail(L):
        return gamma**L * rho_max / (1.0 - gamma)

    if tail(0) < tol:
        return 0
    if gamma == 0.0:
        return 1
    L = max(0, math.ceil(math.log(tol * (1.0 - gamma) / rho_max) / math.log(gamma)) - 2)
    while tail(L) >= tol:
        L += 1
    return L


def model_horizon(model: MissMdp, tol: float = TRUNCATION_TOL) -> int:
    rho = model.rho_max
    return 1 if rho == 0 else horizon_for(model.gamma, rho, tol)


@dataclass(frozen=True)
class History:
    """Observations ``(L, n)`` with ``-1`` for missing, and the actions taken after each."""

    observations: np.ndarray
    actions: np.ndarray
    terminal: bool = False

    def __len__(self):
        return len(self.observations)

    def steps(self):
        for z, a in zip(self.observations, self.actions):
            yield observation_from_array(z), int(a)


class Dataset:
    """A collection of histories stored as flat arrays plus offsets."""

    def __init__(self, features: FeatureSpace, observations, actions, offsets, terminal=None):
        self.features = features
        self.observations = np.asarray(observations, dtype=np.int64).reshape(-1, features.n)
        self.actions = np.asarray(actions, dtype=np.int64)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        k = len(self.offsets) - 1
        self.terminal = np.zeros(k, dtype=bool) if terminal is None else np.asarray(terminal, dtype=bool)
        for a in (self.observations, self.actions, self.offsets, self.terminal):
            a.setflags(write=False)
        if len(self.actions) != len(self.observations) or self.offsets[-1] != len(self.observations):
            raise ModelError("dataset arrays are inconsistent")

    @classmethod
    def from_histories(cls, features: FeatureSpace, histories: Iterable[History]) -> "Dataset":
        histories = list(histories)
        obs = [h.observations for h in histories] or [np.zeros((0, features.n), dtype=np.int64)]
        acts = [h.actions for h in histories] or [np.zeros(0, dtype=np.int64)]
        offsets = np.concatenate([[0], np.cumsum([len(h) for h in histories])])
        return cls(features, np.concatenate(obs), np.concatenate(acts), offsets, [h.terminal for h in histories])

    @classmethod
    def from_observations(cls, features: FeatureSpace, observations: Sequence[Sequence[int | None]]) -> "Dataset":
        """A single-history dataset built from observation tuples (actions set to 0)."""
        obs = np.array([observation_to_array(z) for z in observations], dtype=np.int64).reshape(-1, features.n)
        return cls(features, obs, np.zeros(len(obs), dtype=np.int64), [0, len(obs)])

    def __len__(self):
        return len(self.offsets) - 1

    @property
    def size(self) -> int:
        """Total number of observations."""
        return int(self.offsets[-1])

    def history(self, k: int) -> History:
        lo, hi = self.offsets[k], self.offsets[k + 1]
        return History(self.observations[lo:hi], self.actions[lo:hi], bool(self.terminal[k]))

    def __iter__(self):
        return (self.history(k) for k in range(len(self)))

    @cached_property
    def indicator_codes(self) -> np.ndarray:
        """Indicator code of every observation."""
        bits = (self.observations >= 0).astype(np.int64)
        return bits @ (1 << np.arange(self.features.n))

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.features == other.features
            and np.array_equal(self.observations, other.observations)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.offsets, other.offsets)
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# Behaviour policies and sampling
# ---------------------------------------------------------------------------


class UniformRandom:
    """The fair behaviour policy: every action with probability ``1/|A|``."""

    def sample(self, num_actions: int, u: np.ndarray) -> np.ndarray:
        return np.minimum((u * num_actions).astype(np.int64), num_actions - 1)


def _simulate_batch(model, M, policy, L, count, rng):
    """Run ``count`` trajectories in lockstep; returns lists of per-trajectory arrays."""
    S, n = model.num_states, model.features.n
    init_cum = np.cumsum(model.initial)
    init_cum[-1] = max(init_cum[-1], 1.0)
    s = np.minimum(np.searchsorted(init_cum, rng.random(count), side="right"), S - 1)
    obs = np.full((count, L, n), -1, dtype=np.int64)
    acts = np.zeros((count, L), dtype=np.int64)
    length = np.zeros(count, dtype=np.int64)
    terminal = np.zeros(count, dtype=bool)
    alive = np.ones(count, dtype=bool)
    states = model.features.state_matrix
    R = model.features.indicator_matrix.astype(bool)
    for t in range(L):
        u_obs, u_act, u_next = rng.random(count), rng.random(count), rng.random(count)
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        codes = sample_indicators(M, s[idx], u_obs[idx])
        obs[idx, t] = np.where(R[codes], states[s[idx]], -1)
        length[idx] += 1
        a = policy.sample(model.num_actions, u_act[idx])
        acts[idx, t] = a
        stop = model.terminal_mask[s[idx]]
        terminal[idx[stop]] = True
        alive[idx[stop]] = False
        go = idx[~stop]
        s[go] = model.sample_next(s[go], a[~stop], u_next[go])
    return obs, acts, length, terminal


def sample_trajectory(model: MissMdp, M: MissingnessTable, policy, L: int, rng: np.random.Generator) -> History:
    obs, acts, length, term = _simulate_batch(model, M, policy, L, 1, rng)
    k = int(length[0])
    return History(obs[0, :k], acts[0, :k], bool(term[0]))


def generate_dataset(
    model: MissMdp,
    M: MissingnessTable,
    size: int,
    rng: np.random.Generator | int,
    policy=None,
    horizon: int | None = None,
    exact: bool = False,
) -> Dataset:
    """Sample whole trajectories until their lengths sum to at least ``size``.

    With ``exact`` the last trajectory is cut so the dataset holds exactly
    ``size`` observations; otherwise trajectories are always kept whole.
    """
    if size < 1:
        raise ValueError(f"dataset size must be >= 1, got {size}")
    rng = np.random.default_rng(rng)
    policy = policy or UniformRandom()
    L = horizon if horizon is not None else model_horizon(model)
    L = max(L, 1)
    obs_parts, act_parts, lengths, terms = [], [], [], []
    total = 0
    while total < size:
        batch = max(1, math.ceil((size - total) / L))
        obs, acts, length, term = _simulate_batch(model, M, policy, L, batch, rng)
        for k in range(batch):
            if total >= size:
                break
            m = int(length[k])
            if exact and total + m > size:
                m = size - total
                term[k] = False  # a cut trajectory did not reach its end
            obs_parts.append(obs[k, :m])
            act_parts.append(acts[k, :m])
            lengths.append(m)
            terms.append(term[k])
            total += m
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    return Dataset(model.features, np.concatenate(obs_parts), np.concatenate(act_parts), offsets, terms)


# ---------------------------------------------------------------------------
# Occurrence counts
# ---------------------------------------------------------------------------


def count_observation(D: Dataset, z: Sequence[int | None]) -> int:
    target = observation_to_array(z)
    return int(np.all(D.observations == target, axis=1).sum())


def count_set(D: Dataset, predicate: Callable[[tuple[int | None, ...]], bool]) -> int:
    """Occurrences of observations satisfying ``predicate`` (evaluated once per distinct z)."""
    if D.size == 0:
        return 0
    uniq, counts = np.unique(D.observations, axis=0, return_counts=True)
    return int(sum(c for z, c in zip(uniq, counts) if predicate(observation_from_array(z))))


# ---------------------------------------------------------------------------
# Dataset file format: one history per line, "2,_ 0 1,3 2"
# ---------------------------------------------------------------------------


def format_dataset(D: Dataset) -> str:
    lines = []
    for h in D:
        toks = []
        for z, a in zip(h.observations, h.actions):
            toks.append(",".join("_" if v < 0 else str(int(v)) for v in z))
            toks.append(str(int(a)))
        lines.append(" ".join(toks))
    return "\n".join(lines) + "\n"


def parse_dataset(text: str, features: FeatureSpace) -> Dataset:
    histories = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) % 2:
            toks.append("0")  # a trailing observation without an action
        obs, acts = [], []
        try:
            for ztok, atok in zip(toks[0::2], toks[1::2]):
                vals = [-1 if v == "_" else int(v) for v in ztok.split(",")]
                z = observation_from_array(vals)
                features.validate_observation(z)
                obs.append(vals)
                acts.append(int(atok))
        except ValueError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
        histories.append(History(np.array(obs, dtype=np.int64).reshape(-1, features.n), np.array(acts, dtype=np.int64)))
    return Dataset.from_histories(features, histories)
