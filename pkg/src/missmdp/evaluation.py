"""Policy evaluation on the true model, total-variation metrics and value normalisation."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, field, fields

import numpy as np

from .belief import PRUNE_TOL
from .learn import LearnedMissingness
from .model import MissingnessTable, MissMdp, sample_indicators
from .plan import AlphaPolicy, _dense_if_small
from .simulate import model_horizon

NORMALIZE_TOL = 1e-9


def _table(M) -> MissingnessTable:
    return M.table if isinstance(M, LearnedMissingness) else M


# ---------------------------------------------------------------------------
# Total variation
# ---------------------------------------------------------------------------


def tv_per_state(Mhat, M) -> np.ndarray:
    """``TV(s) = 1/2 sum_z |Mhat(z|s) - M(z|s)|`` for every state."""
    return 0.5 * np.abs(_table(Mhat).probs - _table(M).probs).sum(axis=1)


def tv_at_state(Mhat, M, s: int) -> float:
    return float(tv_per_state(Mhat, M)[s])


def _states(model: MissMdp | None, n: int) -> np.ndarray:
    return np.arange(n) if model is None else model.reachable


def atv(Mhat, M, model: MissMdp | None = None) -> float:
    """Mean TV over the reachable states of ``model`` (all states if omitted)."""
    tv = tv_per_state(Mhat, M)
    return float(tv[_states(model, len(tv))].mean())


def wtv(Mhat, M, model: MissMdp | None = None) -> float:
    """Worst TV over the reachable states of ``model`` (all states if omitted)."""
    tv = tv_per_state(Mhat, M)
    return float(tv[_states(model, len(tv))].max())


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RolloutResult:
    mean: float
    ci95: float
    returns: np.ndarray = field(repr=False)
    impossible_observations: int = 0  # updates that fell back to the ignorable rule


def rollout_value(
    model: MissMdp,
    M_true,
    policy: AlphaPolicy,
    episodes: int,
    rng,
    M_belief=None,
    ignorable: bool = False,
    horizon: int | None = None,
) -> RolloutResult:
    """Mean truncated discounted return of ``policy`` in the world ``(model, M_true)``.

    The agent starts from belief ``mu``, acts greedily on its alpha vectors and
    updates its belief with ``M_belief`` (default ``M_true``), or with
    admittability alone when ``ignorable`` is set.  All episodes run in lockstep
    and consume a fixed number of uniforms per step, so two policies evaluated
    with the same seed face identical environment noise.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = np.random.default_rng(rng)
    M_true = _table(M_true)
    Mb = M_true if M_belief is None else _table(M_belief)
    L = model_horizon(model) if horizon is None else horizon
    fs = model.features
    S = model.num_states
    states = fs.state_matrix
    R = model.absorbing_rewards
    T = _dense_if_small(model.absorbing_transitions)
    Rind = fs.indicator_matrix.astype(bool)
    term = model.terminal_mask
    lik = _likelihood_table(fs, Mb, ignorable)
    emit = fs.emission_ids

    mu_cum = np.cumsum(model.initial)
    s = np.minimum(np.searchsorted(mu_cum, rng.random(episodes), side="right"), S - 1)
    B = np.tile(model.initial, (episodes, 1))
    returns = np.zeros(episodes)
    fallbacks = 0
    disc = 1.0
    for _ in range(L):
        u_next, u_obs = rng.random(episodes), rng.random(episodes)
        a = policy.actions_for(B)
        returns += disc * R[s, a]
        disc *= model.gamma
        nxt = model.sample_next(s, a, u_next)
        s = np.where(term[s], s, nxt)
        codes = sample_indicators(M_true, s, u_obs)

        pred = np.empty_like(B)
        for act in np.unique(a):
            idx = np.flatnonzero(a == act)
            pred[idx] = np.asarray(B[idx] @ T[act])
        if lik is not None:
            post = pred * lik[emit[s, codes]]
        else:
            z = np.where(Rind[codes], states[s], -1)
            admit = np.ones((episodes, S), dtype=bool)
            for i in range(fs.n):
                zi = z[:, i : i + 1]
                admit &= (zi < 0) | (states[None, :, i] == zi)
            post = pred * admit if ignorable else pred * admit * Mb.probs.T[codes]
        tot = post.sum(axis=1)
        bad = ~(tot > 0)
        if bad.any():
            # the belief model rules out what the world emitted: fall back to admittability
            fallbacks += int(bad.sum())
            z = np.where(Rind[codes[bad]], states[s[bad]], -1)
            admit = np.all((z[:, None, :] < 0) | (states[None, :, :] == z[:, None, :]), axis=2)
            post[bad] = pred[bad] * admit
            still = ~(post[bad].sum(axis=1) > 0)
            post[np.flatnonzero(bad)[still]] = pred[bad][still]
        post /= post.sum(axis=1, keepdims=True)
        post[post < PRUNE_TOL] = 0.0
        B = post / post.sum(axis=1, keepdims=True)

    mean = float(returns.mean())
    ci = 1.96 * float(returns.std(ddof=1)) / math.sqrt(episodes) if episodes > 1 else float("inf")
    return RolloutResult(mean, ci, returns, fallbacks)


LIKELIHOOD_TABLE_CELLS = 20_000_000


def _likelihood_table(fs, Mb: MissingnessTable, ignorable: bool) -> np.ndarray | None:
    """``lik[z, s] = Mb(z|s)`` (or admittability) per observation id, if small enough."""
    if fs.num_observations * fs.num_states > LIKELIHOOD_TABLE_CELLS:
        return None
    lik = np.zeros((fs.num_observations, fs.num_states))
    emit = fs.emission_ids
    cols = np.broadcast_to(np.arange(fs.num_states)[:, None], emit.shape)
    lik[emit, cols] = 1.0 if ignorable else Mb.probs
    return lik


class DegenerateNormalization(ValueError):
    pass


def normalize_value(v: float, v_prior: float, v_opt: float) -> float:
    """``(v - v_prior) / (v_opt - v_prior)``: 1 is optimal, 0 is the prior policy."""
    den = v_opt - v_prior
    if abs(den) < NORMALIZE_TOL:
        raise DegenerateNormalization(f"optimal and prior values coincide ({float(v_opt)!r})")
    return (v - v_prior) / den


def value_difference_check(
    model: MissMdp, M, Mhat, policy: AlphaPolicy, episodes: int = 2000, seed=0
) -> float:
    """``|V_M(pi) - V_Mhat(pi)|`` estimated with common random numbers.

    The policy tracks beliefs with ``Mhat`` in both worlds; only the world's
    emission table changes.
    """
    v_true = rollout_value(model, M, policy, episodes, seed, M_belief=Mhat).mean
    v_hat = rollout_value(model, Mhat, policy, episodes, seed, M_belief=Mhat).mean
    return abs(v_true - v_hat)


# ---------------------------------------------------------------------------
# Metrics report
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class MetricsRow:
    seed: int
    dataset_size: int
    learner: str
    atv: float = float("nan")
    wtv: float = float("nan")
    value_mean: float = float("nan")
    value_ci95: float = float("nan")
    value_normalized: float = float("nan")
    pac_epsilon: float = float("nan")  # certified global epsilon of the learned table
    status: str = "ok"


REPORT_FIELDS = tuple(f.name for f in fields(MetricsRow))


def format_report(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(row)])
    return buf.getvalue()


def parse_report(text: str) -> list[MetricsRow]:
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for rec in reader:
        out.append(
            MetricsRow(
                int(rec["seed"]),
                int(rec["dataset_size"]),
                rec["learner"],
                *(float(rec[k]) for k in REPORT_FIELDS[3:9]),
                rec.get("status", "ok"),
            )
        )
    return out


__all__ = [
    "DegenerateNormalization",
    "MetricsRow",
    "RolloutResult",
    "atv",
    "format_report",
    "normalize_value",
    "parse_report",
    "rollout_value",
    "tv_at_state",
    "tv_per_state",
    "value_difference_check",
    "wtv",
]
