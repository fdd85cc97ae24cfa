"""Bayes belief updates, the MAR ignorability shortcut and observation likelihoods.

Beliefs are dense probability vectors over state ids.  Entries below
``PRUNE_TOL`` are dropped after every update and the rest renormalised.
Terminal states are treated as absorbing (see ``MissMdp.absorbing_transitions``).
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import MissingnessTable, MissMdp, ModelError, indicator_code, indicator_of

PRUNE_TOL = 1e-12


class ImpossibleObservation(ModelError):
    """The observation has zero likelihood under the current belief and action."""


def initial_belief(model: MissMdp) -> np.ndarray:
    return model.initial.copy()


def predict(model: MissMdp, b: np.ndarray, a: int) -> np.ndarray:
    """Successor-state distribution ``sum_s T(s'|s,a) b(s)``."""
    return model.absorbing_transitions_t[a] @ np.asarray(b, dtype=float)


def admissible_states(model: MissMdp, z: Sequence[int | None]) -> np.ndarray:
    """Boolean mask of the states that admit ``z``."""
    S = model.features.state_matrix
    mask = np.ones(model.num_states, dtype=bool)
    for i, v in enumerate(z):
        if v is not None:
            mask &= S[:, i] == v
    return mask


def likelihood(model: MissMdp, M: MissingnessTable, z: Sequence[int | None]) -> np.ndarray:
    """``M(z | s)`` for every state ``s``."""
    model.features.validate_observation(z)
    code = indicator_code(indicator_of(z))
    return np.where(admissible_states(model, z), M.probs[:, code], 0.0)


def _posterior(weights: np.ndarray, b, a, z) -> np.ndarray:
    total = weights.sum()
    if not total > 0.0:
        raise ImpossibleObservation(f"observation {tuple(z)} has zero likelihood after action {a}")
    post = weights / total
    post[post < PRUNE_TOL] = 0.0
    return post / post.sum()


def update(model: MissMdp, M: MissingnessTable, b: np.ndarray, a: int, z: Sequence[int | None]) -> np.ndarray:
    """Posterior ``b'(s') ∝ M(z|s') sum_s T(s'|s,a) b(s)``."""
    return _posterior(likelihood(model, M, z) * predict(model, b, a), b, a, z)


def update_ignorable(model: MissMdp, b: np.ndarray, a: int, z: Sequence[int | None]) -> np.ndarray:
    """Posterior using only admittability; exact whenever the missingness is MAR."""
    model.features.validate_observation(z)
    return _posterior(admissible_states(model, z) * predict(model, b, a), b, a, z)


def obs_probability(model: MissMdp, M: MissingnessTable, b: np.ndarray, a: int, z: Sequence[int | None]) -> float:
    """``P(z | b, a)`` -- the unnormalised update mass."""
    return float(likelihood(model, M, z) @ predict(model, b, a))


def successor_observations(model: MissMdp, M: MissingnessTable, b: np.ndarray, a: int) -> dict:
    """``{z: P(z | b, a)}`` over every observation with positive probability.

    Only indicator vectors in the support of each successor's row are visited,
    never the full observation space.
    """
    pred = predict(model, b, a)
    fs = model.features
    out: dict = {}
    for s2 in np.flatnonzero(pred > 0.0):
        state = fs.state_matrix[s2]
        for code in np.flatnonzero(M.probs[s2] > 0.0):
            r = fs.indicator_matrix[code]
            z = tuple(int(v) if bit else None for v, bit in zip(state, r))
            out[z] = out.get(z, 0.0) + pred[s2] * M.probs[s2, code]
    return out


def format_belief(b: np.ndarray) -> str:
    """Space-separated ``s:p`` pairs over the support."""
    return " ".join(f"{s}:{float(b[s])!r}" for s in np.flatnonzero(b))


def parse_belief(text: str, num_states: int) -> np.ndarray:
    b = np.zeros(num_states)
    for tok in text.split():
        s, p = tok.split(":")
        b[int(s)] += float(p)
    if np.any(b < 0) or abs(b.sum() - 1.0) > 1e-9:
        raise ModelError("belief must be a probability distribution")
    return b


__all__ = [
    "ImpossibleObservation",
    "admissible_states",
    "format_belief",
    "initial_belief",
    "likelihood",
    "obs_probability",
    "parse_belief",
    "predict",
    "successor_observations",
    "update",
    "update_ignorable",
]
