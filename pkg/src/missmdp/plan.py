"""Planning on a fully specified miss-MDP.

``solve_point_based`` is a point-based value iteration over a sampled belief
set; every vector it returns is the value of some executable policy, so
``max_alpha alpha . b`` is a lower bound on the optimal value.  The exact
finite-horizon oracle enumerates belief successors independently and is meant
for models with a handful of states.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import belief as bel
from .model import MissingnessTable, MissMdp, ModelError


@dataclass(frozen=True)
class SolveConfig:
    """Solver knobs.

    ``epsilon_target`` is an absolute precision in value units: sweeps stop
    once no retained belief improves by more than ``epsilon_target * (1 - gamma)``.
    ``time_budget`` (seconds) is optional; leaving it unset keeps results
    independent of machine speed.
    """

    epsilon_target: float = 1e-3
    time_budget: float | None = None
    breadth: int = 1
    max_beliefs: int = 200
    max_expansions: int = 30
    max_sweeps: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon_target > 0:
            raise ValueError("epsilon_target must be positive")
        if self.breadth < 1 or self.max_beliefs < 1:
            raise ValueError("breadth and max_beliefs must be >= 1")


@dataclass(frozen=True, eq=False)
class AlphaPolicy:
    vectors: np.ndarray  # (K, S)
    actions: np.ndarray  # (K,)
    gamma: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        acts = np.asarray(self.actions, dtype=np.int64).ravel()
        if V.shape[0] < 1 or V.shape[0] != acts.shape[0]:
            raise ModelError("a policy needs at least one vector and one action per vector")
        if np.any(acts < 0):
            raise ModelError("actions must be non-negative")
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "actions", acts)

    @property
    def num_states(self) -> int:
        return self.vectors.shape[1]

    def value(self, b: np.ndarray) -> float:
        return float(np.max(self.vectors @ b))

    def action(self, b: np.ndarray) -> int:
        return int(self.actions[np.argmax(self.vectors @ b)])

    def actions_for(self, beliefs: np.ndarray) -> np.ndarray:
        """Greedy actions for a stack of beliefs ``(E, S)``."""
        return self.actions[np.argmax(beliefs @ self.vectors.T, axis=1)]


def policy_action(policy: AlphaPolicy, b: np.ndarray) -> int:
    """Action of the maximising vector; ties go to the lowest vector index."""
    return policy.action(b)


def policy_value_at(policy: AlphaPolicy, b: np.ndarray) -> float:
    return policy.value(b)


# ---------------------------------------------------------------------------
# Point-based value iteration
# ---------------------------------------------------------------------------


class _Emissions:
    """All ``(s', r)`` pairs with ``M(r|s') > 0``, sorted by emitted observation."""

    def __init__(self, model: MissMdp, M: MissingnessTable):
        if M.features != model.features:
            raise ModelError("missingness table is over a different feature space")
        s, code = np.nonzero(M.probs > 0.0)
        zid = model.features.emission_ids[s, code]
        order = np.lexsort((code, s, zid))
        self.s, self.code = s[order], code[order]
        self.m = M.probs[self.s, self.code]
        _, self.z = np.unique(zid[order], return_inverse=True)
        self.z = self.z.ravel()
        self.num_z = int(self.z.max()) + 1 if self.z.size else 0
        self.num_states = model.num_states
        self.to_state = sp.csr_matrix(
            (np.ones(self.s.size), (np.arange(self.s.size), self.s)), shape=(self.s.size, model.num_states)
        )


DENSE_STATES = 1500


def _dense_if_small(mats):
    """Dense copies for small state spaces, where BLAS beats sparse products."""
    if mats[0].shape[0] <= DENSE_STATES:
        return tuple(T.toarray() for T in mats)
    return tuple(sp.csr_matrix(T) for T in mats)


class _Solver:
    def __init__(self, model: MissMdp, M: MissingnessTable, config: SolveConfig):
        self.model, self.config = model, config
        self.gamma = model.gamma
        self.T = _dense_if_small(model.absorbing_transitions)
        self.TT = tuple(T.T for T in self.T)
        self.R = model.absorbing_rewards
        self.em = _Emissions(model, M)
        self.M = M

    def blind_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        S = self.model.num_states
        eye = sp.identity(S, format="csc")
        vecs = [
            spsolve((eye - self.gamma * sp.csc_matrix(T)).tocsc(), self.R[:, a]) for a, T in enumerate(self.T)
        ]
        return np.array(vecs), np.arange(self.model.num_actions)

    def backup(self, b: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, int, float]:
        alphas, acts, vals = self.backup_many(b[None, :], G)
        return alphas[0], int(acts[0]), float(vals[0])

    def prepare(self, Bm: np.ndarray) -> list:
        """Per-action structures of a belief set that do not depend on the vectors.

        For action ``a``: the predicted beliefs, a sparse ``(nb * Z, S)`` matrix
        holding ``P(s', z | b, a)`` for every emission pair the belief supports,
        and the mask of supported ``(b, z)`` combinations.
        """
        em = self.em
        nb, Z = Bm.shape[0], em.num_z
        out = []
        for a in range(self.model.num_actions):
            PB = np.asarray(Bm @ self.T[a])  # predicted successor beliefs (nb, S)
            W = PB[:, em.s] * em.m  # (nb, P) probability mass of each pair
            n_idx, p_idx = np.nonzero(W)
            rows = n_idx * Z + em.z[p_idx]
            Q = sp.csr_matrix((W[n_idx, p_idx], (rows, em.s[p_idx])), shape=(nb * Z, em.num_states))
            supported = np.zeros(nb * Z, dtype=bool)
            supported[rows] = True
            out.append((PB, Q, supported.reshape(nb, Z)))
        return out

    def backup_many(self, Bm: np.ndarray, G: np.ndarray, prepared: list | None = None):
        """Point-based backups of every row of ``Bm``; ties go to the lowest action.

        For each action the score of vector ``k`` on observation ``z`` from
        belief ``n`` is a sparse product over the emission pairs that the
        predicted belief actually supports.
        """
        em = self.em
        nb, Z = Bm.shape[0], em.num_z
        prepared = prepared if prepared is not None else self.prepare(Bm)
        best_val = np.full(nb, -np.inf)
        best_alpha = np.zeros((nb, em.num_states))
        best_act = np.zeros(nb, dtype=np.int64)
        for a, (PB, Q, supported) in enumerate(prepared):
            choice = np.argmax(np.asarray(Q @ G.T).reshape(nb, Z, -1), axis=2)  # (nb, Z)
            default = np.argmax(PB @ G.T, axis=1)  # for observations the belief cannot emit
            choice = np.where(supported, choice, default[:, None])
            k = choice[:, em.z]  # (nb, P)
            v = (em.m * G[k, em.s]) @ em.to_state  # (nb, S)
            alpha = self.R[:, a] + self.gamma * np.asarray(v @ self.TT[a])
            val = np.einsum("ij,ij->i", alpha, Bm)
            better = val > best_val
            best_val[better] = val[better]
            best_alpha[better] = alpha[better]
            best_act[better] = a
        return best_alpha, best_act, best_val

    def sample_successor(self, b: np.ndarray, a: int, rng: np.random.Generator) -> np.ndarray | None:
        S = self.model.num_states
        s = min(int(np.searchsorted(np.cumsum(b), rng.random(), side="right")), S - 1)
        s2 = int(self.model.sample_next(np.array([s]), np.array([a]), rng.random(1))[0])
        row = self.M.cumulative[s2]
        code = min(int(np.searchsorted(row, rng.random(), side="right")), len(row) - 1)
        zid = self.model.features.emission_ids[s2, code]
        lik = np.where(self.model.features.emission_ids[:, code] == zid, self.M.probs[:, code], 0.0)
        post = lik * (self.TT[a] @ b)
        total = post.sum()
        if not total > 0.0:
            return None
        post /= total
        post[post < bel.PRUNE_TOL] = 0.0
        return post / post.sum()

    def expand(self, B: list, rng: np.random.Generator) -> list:
        cfg = self.config
        new = []
        for b in list(B):
            if len(B) + len(new) >= cfg.max_beliefs:
                break
            cands = [self.sample_successor(b, a, rng) for a in range(self.model.num_actions)]
            cands = [c for c in cands if c is not None]
            if not cands:
                continue
            pool = np.array(B + new)
            dist = [float(np.abs(pool - c).sum(axis=1).min()) for c in cands]
            for i in np.argsort(dist, kind="stable")[::-1][: cfg.breadth]:
                if dist[i] > 1e-9 and len(B) + len(new) < cfg.max_beliefs:
                    new.append(cands[i])
        return new


def solve_point_based(model: MissMdp, M: MissingnessTable, config: SolveConfig | None = None) -> AlphaPolicy:
    """Point-based value iteration with stochastic farthest-point belief expansion."""
    config = config or SolveConfig()
    start = time.perf_counter()
    b0 = bel.initial_belief(model)
    if not b0.sum() > 0:
        raise ModelError("empty reachable belief set")
    solver = _Solver(model, M, config)
    rng = np.random.default_rng(config.seed)
    G, acts = solver.blind_vectors()
    B = [b0]
    tol = config.epsilon_target * (1.0 - model.gamma)
    sweeps = 0
    out_of_time = lambda: config.time_budget is not None and time.perf_counter() - start > config.time_budget

    for _ in range(config.max_expansions + 1):
        Bm = np.array(B)
        prepared = solver.prepare(Bm)
        for _ in range(config.max_sweeps):
            scores = Bm @ G.T
            old_vals = scores.max(axis=1)
            old_best = np.argmax(scores, axis=1)
            alphas, new_a, vals = solver.backup_many(Bm, G, prepared)
            worse = vals < old_vals  # keep the old vector where the backup does not improve
            alphas[worse] = G[old_best[worse]]
            new_a[worse] = acts[old_best[worse]]
            G, idx = np.unique(alphas, axis=0, return_index=True)
            acts = new_a[idx]
            sweeps += 1
            improvement = float(((Bm @ G.T).max(axis=1) - old_vals).max())
            if improvement < tol or out_of_time():
                break
        if len(B) >= config.max_beliefs or out_of_time():
            break
        added = solver.expand(B, rng)
        if not added:
            break
        B.extend(added)

    meta = {
        "epsilon_target": config.epsilon_target,
        "seconds": time.perf_counter() - start,
        "beliefs": len(B),
        "sweeps": sweeps,
    }
    return AlphaPolicy(G, acts, model.gamma, meta)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class OracleExplosion(RuntimeError):
    """The exact expectimax exceeded its node budget."""


def exact_finite_horizon_value(
    model: MissMdp, M: MissingnessTable, b: np.ndarray, H: int, node_cap: int = 1_000_000, digits: int = 12
) -> float:
    """Optimal ``H``-step discounted value at ``b`` by full expectimax over beliefs.

    Identical beliefs (rounded to ``digits``) at the same depth are memoised.
    """
    R = model.absorbing_rewards
    memo: dict = {}
    nodes = 0

    def value(b, h):
        nonlocal nodes
        if h == 0:
            return 0.0
        key = (h, np.round(b, digits).tobytes())
        if key in memo:
            return memo[key]
        nodes += 1
        if nodes > node_cap:
            raise OracleExplosion(f"more than {node_cap} belief nodes")
        best = -np.inf
        for a in range(model.num_actions):
            q = float(b @ R[:, a])
            if h > 1:
                for z, p in bel.successor_observations(model, M, b, a).items():
                    q += model.gamma * p * value(bel.update(model, M, b, a, z), h - 1)
            best = max(best, q)
        memo[key] = best
        return best

    return value(np.asarray(b, dtype=float), int(H))


def mdp_values(model: MissMdp, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Value iteration on the fully observed MDP (absorbing terminals)."""
    T, R, g = model.absorbing_transitions, model.absorbing_rewards, model.gamma
    v = np.zeros(model.num_states)
    for _ in range(max_iter):
        q = np.column_stack([R[:, a] + g * (T[a] @ v) for a in range(model.num_actions)])
        new = q.max(axis=1)
        if np.abs(new - v).max() < tol:
            return new
        v = new
    return v


# ---------------------------------------------------------------------------
# Policy file
# ---------------------------------------------------------------------------


def format_policy(policy: AlphaPolicy) -> str:
    K, S = policy.vectors.shape
    lines = [f"actions={int(policy.actions.max()) + 1} states={S} gamma={float(policy.gamma)!r}"]
    for a, v in zip(policy.actions, policy.vectors):
        lines.append(" ".join([str(int(a))] + [repr(float(x)) for x in v]))
    return "\n".join(lines) + "\n"


def parse_policy(text: str) -> AlphaPolicy:
    lines = [l for l in text.splitlines() if l.strip() and not l.lstrip().startswith("#")]
    if not lines:
        raise ModelError("empty policy file")
    try:
        header = dict(tok.split("=", 1) for tok in lines[0].split())
        S, gamma = int(header["states"]), float(header["gamma"])
        rows = [l.split() for l in lines[1:]]
        acts = [int(r[0]) for r in rows]
        vecs = [[float(x) for x in r[1:]] for r in rows]
    except (KeyError, ValueError) as exc:
        raise ModelError(f"malformed policy file: {exc}") from None
    if any(len(v) != S for v in vecs):
        raise ModelError(f"every alpha vector needs {S} entries")
    return AlphaPolicy(np.array(vecs).reshape(-1, S), np.array(acts), gamma)


__all__ = [
    "AlphaPolicy",
    "OracleExplosion",
    "SolveConfig",
    "exact_finite_horizon_value",
    "format_policy",
    "mdp_values",
    "parse_policy",
    "policy_action",
    "policy_value_at",
    "solve_point_based",
]
