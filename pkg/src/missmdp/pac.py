"""Okamoto-bound arithmetic, confidence splitting and certification of learned tables.

``delta`` is always the probability of being *correct*; the error budget is
``1 - delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .learn import CountTable
from .mgraph import MGraph
from .model import MissMdp


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def sample_size(epsilon: float, delta: float) -> int:
    """Smallest ``n`` with ``2 exp(-2 n eps^2) <= 1 - delta``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    _check_delta(delta)
    bound = math.log(2.0 / (1.0 - delta)) / (2.0 * epsilon**2)
    n = math.ceil(bound)
    # guard against the ceiling landing one short through rounding
    while 2.0 * math.exp(-2.0 * n * epsilon**2) > 1.0 - delta:
        n += 1
    return max(n, 1)


def epsilon_for(n: int, delta: float) -> float:
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    _check_delta(delta)
    return math.sqrt(math.log(2.0 / (1.0 - delta)) / (2.0 * n))


def split_confidence(delta: float, key_count: int) -> float:
    """Per-key error budget ``(1 - delta) / key_count`` (union bound)."""
    _check_delta(delta)
    if key_count < 1:
        raise ValueError(f"key_count must be >= 1, got {key_count}")
    return (1.0 - delta) / key_count


@dataclass(frozen=True)
class PacBudget:
    """Split of the overall confidence into dataset adequacy and estimation parts.

    ``dataset_share`` is the fraction of the error budget ``1 - delta`` spent on
    the dataset containing enough samples per key.
    """

    delta: float
    dataset_share: float = 0.5

    def __post_init__(self):
        _check_delta(self.delta)
        if not 0.0 <= self.dataset_share < 1.0:
            raise ValueError("dataset_share must lie in [0, 1)")

    @property
    def dataset_error(self) -> float:
        return (1.0 - self.delta) * self.dataset_share

    @property
    def estimate_delta(self) -> float:
        """Confidence left for the estimates themselves."""
        return 1.0 - (1.0 - self.delta) * (1.0 - self.dataset_share)


@dataclass(frozen=True)
class PacCertificate:
    delta: float
    epsilons: dict = field(default_factory=dict)  # key -> epsilon
    samples: dict = field(default_factory=dict)  # key -> n
    flagged: frozenset = frozenset()  # keys without samples
    per_key_error: float = 0.0

    @property
    def global_epsilon(self) -> float:
        return max(self.epsilons.values(), default=0.0)


def certify(
    counts: CountTable, delta: float, keys=None, exclude_unvisited: bool = False
) -> PacCertificate:
    """Post-hoc epsilon for every Bernoulli process behind a learner run.

    Raw counts are used (no smoothing).  ``keys`` restricts certification to a
    subset of conditioning keys (e.g. those of reachable states).  Keys without
    samples get epsilon 1 and are flagged, unless ``exclude_unvisited`` drops them.
    """
    _check_delta(delta)
    totals = dict(zip(counts.keys, counts.totals.tolist()))
    selected = list(counts.keys) if keys is None else [k for k in counts.keys if k in set(keys)]
    flagged = frozenset(k for k in selected if totals[k] == 0)
    if exclude_unvisited:
        selected = [k for k in selected if totals[k] > 0]
    if not selected:
        return PacCertificate(delta, {}, {}, flagged, 0.0)
    per_key = split_confidence(delta, len(selected) * counts.processes_per_key)
    eps, samples = {}, {}
    for k in selected:
        n = totals[k]
        samples[k] = n
        eps[k] = 1.0 if n == 0 else min(1.0, epsilon_for(n, 1.0 - per_key))
    return PacCertificate(delta, eps, samples, flagged, per_key)


def learner_keys(model: MissMdp, learner_kind: str, always=None, parents=None) -> list:
    """Conditioning keys a learner uses on the reachable states of ``model``.

    AsMAR keys are projections onto ``always``; AIMI keys are ``(i, parent
    values)`` for the given per-feature ``parents``; AMCAR has the single key ``()``.
    """
    fs = model.features
    S = fs.state_matrix[model.reachable]
    if learner_kind == "amcar":
        return [()]
    if learner_kind == "asmar":
        cols = sorted(always or ())
        return sorted({tuple(int(v) for v in row) for row in S[:, cols]})
    if learner_kind == "aimi":
        if parents is None:
            parents = tuple(tuple(j for j in range(fs.n) if j != i) for i in range(fs.n))
        keys = set()
        for i, par in enumerate(parents):
            if par is None:
                continue
            keys |= {(i, tuple(int(v) for v in row)) for row in S[:, list(par)]}
        return sorted(keys)
    raise ValueError(f"unknown learner {learner_kind!r}")


def required_counts_plan(
    model: MissMdp,
    learner_kind: str,
    epsilon: float,
    delta: float,
    always=None,
    parents=None,
    graph: MGraph | None = None,
    dataset_share: float = 0.0,
) -> dict:
    """Okamoto sample target per conditioning key.

    The estimation share of the error budget is split uniformly over all
    Bernoulli processes.  ``dataset_share`` reserves part of the budget for
    dataset adequacy (0 by default, since no trajectory count is derived).
    """
    if learner_kind == "aimi" and parents is None and graph is not None:
        from .learn import _select_parents

        parents = _select_parents(model.features.n, graph, None, ())
    keys = learner_keys(model, learner_kind, always, parents)
    if learner_kind == "aimi":
        per = 1
    else:
        num = model.features.num_indicators
        per = 1 if num <= 2 else num
    budget = PacBudget(delta, dataset_share)
    err = split_confidence(budget.estimate_delta, len(keys) * per)
    n = sample_size(epsilon, 1.0 - err)
    return {k: n for k in keys}


def bernoulli_coverage(p: float, n: int, delta: float, repetitions: int, rng) -> float:
    """Fraction of repetitions where ``|p_hat - p| <= epsilon_for(n, delta)``."""
    rng = np.random.default_rng(rng)
    eps = epsilon_for(n, delta)
    k = rng.binomial(n, p, size=repetitions)
    return float(np.mean(np.abs(k / n - p) <= eps))


# ---------------------------------------------------------------------------
# Certificate report file
# ---------------------------------------------------------------------------


def _key_str(key) -> str:
    return repr(key).replace(" ", "")


def format_certificate(cert: PacCertificate) -> str:
    lines = [f"delta={float(cert.delta)!r}", f"global_epsilon={float(cert.global_epsilon)!r}"]
    for k in cert.epsilons:
        lines.append(f"{_key_str(k)} {cert.samples[k]} {float(cert.epsilons[k])!r} {int(k in cert.flagged)}")
    return "\n".join(lines) + "\n"


def parse_certificate(text: str) -> PacCertificate:
    import ast

    lines = [l for l in text.splitlines() if l.strip()]
    delta = float(lines[0].split("=", 1)[1])
    eps, samples, flagged = {}, {}, set()
    for line in lines[2:]:
        key_s, n, e, f = line.rsplit(" ", 3)
        key = ast.literal_eval(key_s)
        eps[key] = float(e)
        samples[key] = int(n)
        if int(f):
            flagged.add(key)
    return PacCertificate(delta, eps, samples, frozenset(flagged))


def certified_zero(n: int, successes: int, delta: float, p_min: float) -> bool:
    """Whether an unobserved outcome can be declared impossible.

    ``p_min`` is a known lower bound on every nonzero missingness probability;
    the outcome is certified absent once the Okamoto upper bound drops below it.
    """
    if p_min <= 0:
        raise ValueError("p_min must be positive")
    return successes == 0 and n >= 1 and epsilon_for(n, delta) < p_min


__all__ = [
    "PacBudget",
    "PacCertificate",
    "bernoulli_coverage",
    "certified_zero",
    "certify",
    "epsilon_for",
    "learner_keys",
    "required_counts_plan",
    "sample_size",
    "split_confidence",
]
