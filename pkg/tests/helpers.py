"""Shared fixtures: the three 2x2 example tables and small random models."""
from __future__ import annotations

import numpy as np
from missmdp.model import FeatureSpace, MissingnessTable, MissMdp

A, B = 0, 1  # feature values "a" and "b"
FS22 = FeatureSpace((2, 2))


def ex1_table() -> MissingnessTable:
    """MCAR: feature 2 missing with probability 0.5 everywhere."""
    return MissingnessTable.from_function(FS22, lambda s: {(1, 1): 0.5, (1, 0): 0.5})


def ex2_smar_table() -> MissingnessTable:
    """Simple MAR: feature 1 may go missing only when feature 2 is b."""

    def row(s):
        return {(1, 1): 1.0} if s[1] == A else {(1, 1): 0.5, (0, 1): 0.5}

    return MissingnessTable.from_function(FS22, row)


def ex2_mar_table() -> MissingnessTable:
    """MAR but not simple MAR: feature 2 can also go missing."""

    def row(s):
        if s[1] == A:
            return {(1, 1): 0.5, (0, 0): 0.5}
        return {(1, 1): 0.25, (0, 1): 0.25, (0, 0): 0.5}

    return MissingnessTable.from_function(FS22, row)


def ex3_table() -> MissingnessTable:
    """MNAR, self-censoring on feature 2."""

    def row(s):
        return {(1, 1): 0.5, (1, 0): 0.5} if s[1] == A else {(1, 1): 0.1, (1, 0): 0.9}

    return MissingnessTable.from_function(FS22, row)


def random_model(fs: FeatureSpace, num_actions: int, rng, gamma: float = 0.9, density: float = 0.6) -> MissMdp:
    """Dense-ish random transitions, rewards in [-1, 1], uniform initial belief."""
    rng = np.random.default_rng(rng)
    S = fs.num_states
    mats = []
    for _ in range(num_actions):
        T = rng.random((S, S)) * (rng.random((S, S)) < density)
        T[np.arange(S), rng.integers(0, S, S)] += 0.1  # every row has mass
        mats.append(T / T.sum(axis=1, keepdims=True))
    R = rng.uniform(-1, 1, (S, num_actions))
    return MissMdp(fs, num_actions, tuple(mats), R, np.full(S, 1.0 / S), gamma)


def random_table(fs: FeatureSpace, rng, support: float = 0.7) -> MissingnessTable:
    """Random rows over indicator vectors; the fully observed one always has mass."""
    rng = np.random.default_rng(rng)
    P = rng.random((fs.num_states, fs.num_indicators)) * (rng.random((fs.num_states, fs.num_indicators)) < support)
    P[:, -1] += 0.05
    return MissingnessTable(fs, P / P.sum(axis=1, keepdims=True))


def identity_model(fs: FeatureSpace, gamma: float = 0.9) -> MissMdp:
    """One action that keeps the state, zero reward, uniform initial belief."""
    S = fs.num_states
    return MissMdp(fs, 1, (np.eye(S),), np.zeros((S, 1)), np.full(S, 1.0 / S), gamma)


# -- small POMDPs the exact expectimax can solve at the full truncation horizon --
# Rewards are in cost form (all <= 0) so the H-step optimum upper-bounds every
# infinite-horizon policy value; the beliefs they generate stay few enough to memoise.


def tiger():
    """Listen (-1) or open a door; the tiger's side is heard 30% of the time."""
    fs = FeatureSpace((2,))
    T, R = {}, {}
    for s in range(2):
        T[(s, 0)], R[(s, 0)] = {s: 1.0}, -1.0
        T[(s, 1)], R[(s, 1)] = {0: 0.5, 1: 0.5}, (-10.0 if s == 0 else 0.0)
        T[(s, 2)], R[(s, 2)] = {0: 0.5, 1: 0.5}, (-10.0 if s == 1 else 0.0)
    M = MissingnessTable.from_function(fs, lambda s: {(1,): 0.3, (0,): 0.7})
    return MissMdp.from_rows(fs, 3, T, R, {0: 0.5, 1: 0.5}, 0.8), M


def ring():
    """Rotate feature 2 or flip feature 1; feature 2 hidden 40% of the time (MCAR)."""
    fs = FeatureSpace((2, 3))
    T, R = {}, {}
    for s in range(6):
        x, y = fs.decode(s)
        T[(s, 0)], R[(s, 0)] = {fs.encode((x, (y + 1) % 3)): 1.0}, (0.0 if (x, y) == (1, 2) else -1.0)
        T[(s, 1)], R[(s, 1)] = {fs.encode((1 - x, y)): 1.0}, -1.2
    M = MissingnessTable.from_function(fs, lambda s: {(1, 1): 0.6, (1, 0): 0.4})
    return MissMdp.from_rows(fs, 2, T, R, {s: 1 / 6 for s in range(6)}, 0.7), M


def self_censoring():
    """Stay or reset; feature 2 censors itself as in the MNAR example table."""
    T, R = {}, {}
    for s in range(4):
        x, y = FS22.decode(s)
        T[(s, 0)], R[(s, 0)] = {s: 1.0}, (0.0 if y == B else -2.0)
        T[(s, 1)], R[(s, 1)] = {t: 0.25 for t in range(4)}, -1.0
    return MissMdp.from_rows(FS22, 2, T, R, {s: 0.25 for s in range(4)}, 0.6), ex3_table()


def observed_mdp():
    """A random fully observed 5-state MDP."""
    fs = FeatureSpace((5,))
    rng = np.random.default_rng(7)
    T = tuple(rng.dirichlet(np.full(5, 0.5), size=5) for _ in range(2))
    R = rng.uniform(-1, 1, (5, 2))
    model = MissMdp(fs, 2, T, R - R.max(), np.full(5, 0.2), 0.75)
    return model, MissingnessTable.from_function(fs, lambda s: {(1,): 1.0})


def mar_drift():
    """Noisy counter with a reset; feature 1 hidden only when feature 2 is 1 (MAR)."""
    fs = FeatureSpace((3, 2))
    T, R = {}, {}
    for s in range(6):
        x, y = fs.decode(s)
        T[(s, 0)], R[(s, 0)] = {fs.encode(((x + 1) % 3, y)): 0.8, fs.encode((x, 1 - y)): 0.2}, 0.5 * x - 1.0
        T[(s, 1)], R[(s, 1)] = {fs.encode((0, y)): 1.0}, (-0.2 if x == 2 else -0.8)
    M = MissingnessTable.from_function(fs, lambda s: {(1, 1): 1.0} if s[1] == 0 else {(1, 1): 0.5, (0, 1): 0.5})
    return MissMdp.from_rows(fs, 2, T, R, {0: 1.0}, 0.6), M


ORACLE_MODELS = {"tiger": tiger, "ring": ring, "self_censoring": self_censoring, "observed_mdp": observed_mdp, "mar_drift": mar_drift}
