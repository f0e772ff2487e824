"""Randomized gossip with boundary nodes: sensor polling and pairwise averaging.

Randomness contract for Monte Carlo runs: replication ``r`` under master
seed ``s`` draws from ``PCG64(SeedSequence(s, spawn_key=(r,)))``. Step ``t``
of that replication consumes the ``t``-th block of its stream (``M``
uniforms for polling, one uniform for pairwise), so any replication can be
replayed alone with :func:`sample_path` and gives the same values it had
inside the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .graph import Graph
from .linalg import STOCHASTIC_TOL, StateVector, SystemMatrix
from .serial import read_json, write_json

POLLING = "polling"
PAIRWISE = "pairwise"
_CHUNK = 256


class GossipError(ValueError):
    pass


@dataclass(frozen=True)
class PollingModel:
    base: SystemMatrix
    poll_prob: float

    def __post_init__(self):
        if not 0.0 <= self.poll_prob <= 1.0:
            raise GossipError(f"poll_prob must lie in [0, 1], got {self.poll_prob}")


@dataclass(frozen=True)
class PairwiseModel:
    """Distribution over unordered pairs with a per-pair averaging weight.

    ``pairs`` is a (P, 2) array of 1-based node ids with ``i < j``;
    ``probs`` and ``alphas`` are aligned with it.
    """

    pairs: np.ndarray
    probs: np.ndarray
    alphas: np.ndarray
    num_boundary: int
    num_nodes: int
    require_boundary_pair: bool = True

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.int64).reshape(-1, 2)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        alphas = np.broadcast_to(np.array(self.alphas, dtype=float), probs.shape).copy()
        if pairs.shape[0] != probs.size:
            raise GossipError("pairs and probs differ in length")
        K, N = self.num_boundary, self.num_nodes
        if K < 0 or N <= K:
            raise GossipError(f"need 0 <= num_boundary < num_nodes, got K={K}, N={N}")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise GossipError("pair with i == j")
        if pairs.size and (pairs.min() < 1 or pairs.max() > N):
            raise GossipError(f"pair endpoint outside 1..{N}")
        pairs = np.sort(pairs, axis=1)
        if len({tuple(p) for p in pairs.tolist()}) != len(pairs):
            raise GossipError("duplicate pair")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > STOCHASTIC_TOL:
            raise GossipError(f"pair probabilities must be >= 0 and sum to 1 (sum={probs.sum()!r})")
        if np.any(alphas <= 0) or np.any(alphas >= 1):
            raise GossipError("every alpha must lie strictly inside (0, 1)")
        if self.require_boundary_pair and not has_boundary_pair(pairs, probs, K):
            raise GossipError("no pair joining a boundary node and an internal node has positive probability")
        for name, arr in (("pairs", pairs), ("probs", probs), ("alphas", alphas)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, num_boundary: int, num_nodes: int, alpha: float, **kw) -> "PairwiseModel":
        """Uniform distribution over all unordered pairs, one shared alpha."""
        pairs = np.array(list(combinations(range(1, num_nodes + 1), 2)))
        probs = np.full(len(pairs), 1.0 / len(pairs))
        return cls(pairs, probs, alpha, num_boundary, num_nodes, **kw)

    @classmethod
    def over_edges(cls, g: Graph, alpha: float, **kw) -> "PairwiseModel":
        """Uniform distribution over the graph's edges."""
        pairs = np.array(sorted(g.edges))
        probs = np.full(len(pairs), 1.0 / len(pairs))
        return cls(pairs, probs, alpha, g.num_boundary, g.num_nodes, **kw)

    @property
    def K(self) -> int:
        return self.num_boundary

    @property
    def M(self) -> int:
        return self.num_nodes - self.num_boundary

    def alpha_for(self, i: int, j: int) -> float:
        a, b = min(i, j), max(i, j)
        hit = np.nonzero((self.pairs[:, 0] == a) & (self.pairs[:, 1] == b))[0]
        if hit.size:
            return float(self.alphas[hit[0]])
        if np.all(self.alphas == self.alphas[0]):
            return float(self.alphas[0])
        raise GossipError(f"pair ({i}, {j}) has no alpha in this model")


def has_boundary_pair(pairs, probs, num_boundary: int) -> bool:
    pairs = np.asarray(pairs).reshape(-1, 2)
    lo, hi = pairs.min(axis=1), pairs.max(axis=1)
    mixed = (lo <= num_boundary) & (hi > num_boundary)
    return bool(np.any(mixed & (np.asarray(probs) > 0)))


# -- sensor polling ------------------------------------------------------------

def sample_polling_step(model: PollingModel, x: StateVector, rng: np.random.Generator) -> StateVector:
    """Each internal node applies its row of ``L`` with probability p.

    All reads come from the input state (synchronous snapshot).
    """
    m = model.base
    x.check(m)
    poll = rng.random(m.M) < model.poll_prob
    averaged = m.p_e @ x.x_b + m.p_i @ x.x_i
    return StateVector(x.x_b, np.where(poll, averaged, x.x_i))


def expected_polling_matrix(model: PollingModel) -> SystemMatrix:
    """``p L + (1 - p) I`` restricted to the internal rows."""
    p, m = model.poll_prob, model.base
    return SystemMatrix(p * m.p_e, p * m.p_i + (1.0 - p) * np.eye(m.M))


# -- pairwise averaging -----------------------------------------------------------

def pairwise_weight_matrix(model: PairwiseModel, i: int, j: int, n_total: int | None = None) -> np.ndarray:
    """Full N x N matrix applied when pair ``{i, j}`` is drawn.

    Nodes ``i`` and ``j`` mix with weight alpha; a boundary member of the
    pair has its row reset to the identity row.
    """
    n = model.num_nodes if n_total is None else n_total
    if i == j:
        raise GossipError("pair needs two distinct nodes")
    if not (1 <= i <= n and 1 <= j <= n):
        raise GossipError(f"pair ({i}, {j}) outside 1..{n}")
    a = model.alpha_for(i, j)
    W = np.eye(n)
    for u, v in ((i, j), (j, i)):
        if u > model.num_boundary:
            W[u - 1, u - 1] = 1.0 - a
            W[u - 1, v - 1] = a
    return W


def sample_pairwise_step(model: PairwiseModel, x: StateVector, rng: np.random.Generator) -> StateVector:
    k = _draw_pairs(model, rng.random(1))[0]
    full = x.full()
    if full.size != model.num_nodes:
        raise ValueError(f"state has {full.size} nodes, model has {model.num_nodes}")
    i, j = model.pairs[k] - 1
    a = model.alphas[k]
    xi, xj = full[i], full[j]
    if i >= model.num_boundary:
        full[i] = (1.0 - a) * xi + a * xj
    if j >= model.num_boundary:
        full[j] = (1.0 - a) * xj + a * xi
    return StateVector.from_full(full, model.num_boundary)


def expected_pairwise_matrix(model: PairwiseModel, clamp: bool = True) -> np.ndarray:
    """``sum pi_ij W_ij`` as a full matrix, with or without the boundary reset."""
    N, K = model.num_nodes, model.num_boundary
    E = np.eye(N)
    for (i, j), pi, a in zip(model.pairs - 1, model.probs, model.alphas):
        for u, v in ((i, j), (j, i)):
            if clamp and u < K:
                continue
            E[u, u] -= pi * a
            E[u, v] += pi * a
    return E


def expected_pairwise_blocks(model: PairwiseModel) -> SystemMatrix:
    E = expected_pairwise_matrix(model, clamp=True)
    K = model.num_boundary
    return SystemMatrix(E[K:, :K], E[K:, K:])


def _draw_pairs(model: PairwiseModel, u) -> np.ndarray:
    cdf = np.cumsum(model.probs)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


# -- Monte Carlo -----------------------------------------------------------------

@dataclass
class MonteCarloResult:
    model: str
    steps: int
    reps: int
    seed: int
    record_steps: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "steps": self.steps,
            "reps": self.reps,
            "seed": self.seed,
            "record_steps": self.record_steps.tolist(),
            "mean": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonteCarloResult":
        return cls(
            d["model"], int(d["steps"]), int(d["reps"]), int(d["seed"]),
            np.array(d["record_steps"], dtype=int), np.array(d["mean"], dtype=float),
            np.array(d["stderr"], dtype=float),
        )

    def save(self, path) -> None:
        write_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "MonteCarloResult":
        return cls.from_dict(read_json(path))


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(rep,))))


def _record_points(steps: int, stride: int) -> np.ndarray:
    pts = list(range(0, steps + 1, stride))
    if pts[-1] != steps:
        pts.append(steps)
    return np.array(pts)


def _run_batch(kind, model, x0: StateVector, steps: int, seed: int, reps_idx, stride: int):
    """Advance one path per replication index; yield (t, X) at recorded steps."""
    rngs = [replication_rng(seed, r) for r in reps_idx]
    R = len(rngs)
    X = np.tile(x0.full(), (R, 1))
    rows = np.arange(R)
    yield 0, X
    if kind == POLLING:
        m = model.base
        x0.check(m)
        K, M, p = m.K, m.M, model.poll_prob
        rowsT = np.hstack([m.p_e, m.p_i]).T
    elif kind == PAIRWISE:
        if x0.full().size != model.num_nodes:
            raise ValueError(f"state has {x0.full().size} nodes, model has {model.num_nodes}")
        K = model.num_boundary
        left = model.pairs[:, 0] - 1
        right = model.pairs[:, 1] - 1
        alphas = model.alphas
    else:
        raise GossipError(f"unknown gossip model {kind!r}")
    t = 0
    while t < steps:
        chunk = min(_CHUNK, steps - t)
        if kind == POLLING:
            polls = np.stack([g.random((chunk, M)) < p for g in rngs], axis=1)
        else:
            draws = _draw_pairs(model, np.stack([g.random(chunk) for g in rngs], axis=1))
        for c in range(chunk):
            if kind == POLLING:
                averaged = X @ rowsT
                X[:, K:] = np.where(polls[c], averaged, X[:, K:])
            else:
                k = draws[c]
                i, j, a = left[k], right[k], alphas[k]
                xi, xj = X[rows, i], X[rows, j]
                X[rows, i] = np.where(i < K, xi, (1.0 - a) * xi + a * xj)
                X[rows, j] = np.where(j < K, xj, (1.0 - a) * xj + a * xi)
            t += 1
            if t % stride == 0 or t == steps:
                yield t, X


def sample_path(kind: str, model, x0: StateVector, steps: int, seed: int, rep: int, record_stride: int = 1):
    """Replay replication ``rep`` alone; returns (record_steps, states)."""
    ts, states = [], []
    for t, X in _run_batch(kind, model, x0, steps, seed, [rep], record_stride):
        ts.append(t)
        states.append(X[0].copy())
    return np.array(ts), np.array(states)


def monte_carlo_mean(
    kind: str,
    model,
    x0: StateVector,
    steps: int,
    reps: int,
    seed: int,
    record_stride: int = 1,
) -> MonteCarloResult:
    """Pointwise mean and standard error over ``reps`` independent paths."""
    if reps < 2:
        raise ValueError("need at least two replications for a standard error")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    record = _record_points(steps, record_stride)
    mean = np.empty((record.size, x0.full().size))
    se = np.empty_like(mean)
    for row, (t, X) in enumerate(_run_batch(kind, model, x0, steps, seed, range(reps), record_stride)):
        mean[row] = X.mean(axis=0)
        se[row] = X.std(axis=0, ddof=1) / np.sqrt(reps)
    return MonteCarloResult(kind, steps, reps, int(seed), record, mean, se)


def contact_probabilities(kind: str, model) -> np.ndarray:
    """Per internal node, the chance that one step updates it."""
    if kind == POLLING:
        return np.full(model.base.M, model.poll_prob)
    if kind == PAIRWISE:
        q = np.zeros(model.num_nodes)
        np.add.at(q, model.pairs[:, 0] - 1, model.probs)
        np.add.at(q, model.pairs[:, 1] - 1, model.probs)
        return q[model.num_boundary:]
    raise GossipError(f"unknown gossip model {kind!r}")


def resolvable_horizon(kind: str, model, reps: int, min_untouched: float = 20.0) -> int:
    """Longest horizon at which every internal node is expected to stay
    untouched in at least ``min_untouched`` of ``reps`` replications.

    Past it, the sample mean is driven by a handful of rare slow paths and
    its standard error is no longer a usable yardstick.
    """
    q = float(contact_probabilities(kind, model).min())
    if reps <= min_untouched:
        raise ValueError("reps must exceed min_untouched")
    if q <= 0.0:
        raise GossipError("some internal node is never updated")
    if q >= 1.0:
        return 1
    return max(1, int(np.floor(np.log(reps / min_untouched) / -np.log1p(-q))))


def expected_system(kind: str, model) -> SystemMatrix:
    if kind == POLLING:
        return expected_polling_matrix(model)
    if kind == PAIRWISE:
        return expected_pairwise_blocks(model)
    raise GossipError(f"unknown gossip model {kind!r}")


def expected_mean_path(kind: str, model, x0: StateVector, record_steps) -> np.ndarray:
    """``E(L)^t x0`` at each recorded t (full state vectors)."""
    E = expected_system(kind, model)
    record_steps = np.asarray(record_steps)
    out = np.empty((record_steps.size, E.N))
    x_b, x = x0.x_b, x0.x_i.copy()
    drive = E.p_e @ x_b
    t = 0
    for row, target in enumerate(record_steps):
        while t < target:
            x = drive + E.p_i @ x
            t += 1
        out[row] = np.concatenate([x_b, x])
    return out
