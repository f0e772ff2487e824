"""System matrix, spectral bounds and the closed-form limit.

The synchronous averaging operator is the block matrix::

    L = [ I_K   0  ]
        [ P_e  P_i ]

where the ``M`` internal rows ``[P_e | P_i]`` are row-stochastic. When every
internal node can reach a boundary node, ``rho(P_i) < 1`` and the internal
state converges to ``(I - P_i)^{-1} P_e x_b``.

Tolerance ladder used throughout the package: 1e-12 for construction checks,
1e-10 for solver residuals, 1e-8 for iteration-versus-closed-form agreement.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, neighbors
from .serial import csv_text, read_csv

STOCHASTIC_TOL = 1e-12
RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-13


class WeightError(ValueError):
    """Weights violate the system-matrix invariants."""


class SingularMatrixError(ArithmeticError):
    """``I - P_i`` (or ``I - P_i^tau``) is numerically singular.

    This is how a violated absorbing condition shows up numerically.
    """


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemMatrix:
    """Internal rows of ``L``: ``p_e`` is M x K, ``p_i`` is M x M."""

    p_e: np.ndarray
    p_i: np.ndarray

    def __post_init__(self):
        p_e = _frozen(self.p_e)
        p_i = _frozen(self.p_i)
        if p_i.ndim != 2 or p_i.shape[0] != p_i.shape[1] or p_i.shape[0] < 1:
            raise WeightError(f"p_i must be a non-empty square matrix, got shape {p_i.shape}")
        M = p_i.shape[0]
        if p_e.size == 0:
            p_e = _frozen(np.zeros((M, 0)))
        if p_e.ndim != 2 or p_e.shape[0] != M:
            raise WeightError(f"p_e must have {M} rows, got shape {p_e.shape}")
        both = np.hstack([p_e, p_i])
        if not np.all(np.isfinite(both)):
            raise WeightError("weights must be finite")
        if np.any(both < 0):
            raise WeightError("negative weight")
        if np.any(both > 1 + STOCHASTIC_TOL):
            raise WeightError("weight above 1")
        dev = np.abs(both.sum(axis=1) - 1.0)
        if np.any(dev > STOCHASTIC_TOL):
            row = int(np.argmax(dev))
            raise WeightError(f"internal row {row} sums to {both[row].sum()!r}, not 1")
        object.__setattr__(self, "p_e", p_e)
        object.__setattr__(self, "p_i", p_i)

    @property
    def K(self) -> int:
        return self.p_e.shape[1]

    @property
    def M(self) -> int:
        return self.p_i.shape[0]

    @property
    def N(self) -> int:
        return self.K + self.M

    def full(self) -> np.ndarray:
        """Materialize the whole (K+M) x (K+M) operator ``L``."""
        K, N = self.K, self.N
        L = np.zeros((N, N))
        L[:K, :K] = np.eye(K)
        L[K:, :K] = self.p_e
        L[K:, K:] = self.p_i
        return L

    @classmethod
    def from_full(cls, L) -> "SystemMatrix":
        """Inverse of :meth:`full`; boundary rows must be identity rows."""
        L = np.asarray(L, dtype=float)
        N = L.shape[0]
        K = 0
        while K < N and np.array_equal(L[K], np.eye(N)[K]):
            K += 1
        if K == N:
            raise WeightError("no internal rows in L")
        return cls(L[K:, :K], L[K:, K:])

    def absorbing(self) -> bool:
        """True iff every internal node reaches a boundary column through positive weights.

        This is the Markov-chain form of the absorbing condition, checked on
        the sparsity pattern of the weights rather than on a graph.
        """
        if self.K == 0:
            return False
        ok = self.p_e.sum(axis=1) > 0
        # reverse reachability: k is good if it puts weight on a good node
        into = [np.nonzero(self.p_i[:, col] > 0)[0] for col in range(self.M)]
        queue = deque(np.nonzero(ok)[0].tolist())
        while queue:
            col = queue.popleft()
            for k in into[col]:
                if not ok[k]:
                    ok[k] = True
                    queue.append(k)
        return bool(ok.all())

    def respects(self, g: Graph) -> bool:
        """Weights are nonzero only on graph edges or on the diagonal."""
        if (g.num_boundary, g.num_internal) != (self.K, self.M):
            return False
        L = self.full()
        allowed = g.adjacency() + np.eye(self.N)
        return not np.any((L[self.K:] > 0) & (allowed[self.K:] == 0))


@dataclass(frozen=True)
class StateVector:
    x_b: np.ndarray
    x_i: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_b", np.array(self.x_b, dtype=float).reshape(-1))
        object.__setattr__(self, "x_i", np.array(self.x_i, dtype=float).reshape(-1))

    @classmethod
    def from_full(cls, x, K: int) -> "StateVector":
        x = np.asarray(x, dtype=float)
        return cls(x[:K], x[K:])

    def full(self) -> np.ndarray:
        return np.concatenate([self.x_b, self.x_i])

    def check(self, m: SystemMatrix) -> None:
        if self.x_b.size != m.K or self.x_i.size != m.M:
            raise ValueError(
                f"state has (K, M) = ({self.x_b.size}, {self.x_i.size}), matrix expects ({m.K}, {m.M})"
            )


@dataclass(frozen=True)
class LimitResult:
    x_inf: StateVector
    solver_residual: float
    method: str
    iterations: int = 0


@dataclass(frozen=True)
class SpectralEstimate:
    estimate: float
    gelfand_bound: float
    iterations: int
    power: int = field(default=0)


# -- weight constructors ------------------------------------------------------

def _check_internal_degrees(g: Graph) -> None:
    for n in g.internal_nodes:
        if not neighbors(g, n):
            raise GraphError(f"internal node {g.label_of(n)} has no neighbors; its row cannot be stochastic")


def uniform_weights(g: Graph, self_weight: float = 0.0) -> SystemMatrix:
    """Self weight on the diagonal, the remainder split equally among neighbors."""
    if not 0.0 <= self_weight < 1.0:
        raise WeightError(f"self_weight must lie in [0, 1), got {self_weight}")
    _check_internal_degrees(g)
    K = g.num_boundary
    L = np.zeros((g.num_internal, g.num_nodes))
    for row, n in enumerate(g.internal_nodes):
        nb = sorted(neighbors(g, n))
        L[row, [v - 1 for v in nb]] = (1.0 - self_weight) / len(nb)
        L[row, n - 1] += self_weight
    return SystemMatrix(L[:, :K], L[:, K:])


def random_weights(g: Graph, seed) -> SystemMatrix:
    """Uniform(0, 1] draws for self and each neighbor, normalized per row."""
    _check_internal_degrees(g)
    rng = np.random.default_rng(seed)
    K = g.num_boundary
    L = np.zeros((g.num_internal, g.num_nodes))
    for row, n in enumerate(g.internal_nodes):
        cols = [n - 1] + [v - 1 for v in sorted(neighbors(g, n))]
        w = 1.0 - rng.random(len(cols))  # (0, 1], strictly positive
        L[row, cols] = w / w.sum()
    return SystemMatrix(L[:, :K], L[:, K:])


# -- solvers --------------------------------------------------------------------

def gauss_solve(a, b, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides. Raises
    :class:`SingularMatrixError` when a pivot falls below ``pivot_tol``.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise ValueError(f"shape mismatch: a {a.shape}, b {b.shape}")
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < pivot_tol:
            raise SingularMatrixError(f"pivot {abs(a[p, k]):.3e} below {pivot_tol:.0e} at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        lam = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(lam, a[k, k:])
        b[k + 1:] -= np.outer(lam, b[k])
    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x[:, 0] if vec else x


def neumann_solve(p_i, rhs, tol: float = 1e-14, max_terms: int = 10_000_000):
    """Sum ``p_i^m rhs`` over m until the increment drops below ``tol``.

    Returns ``(solution, terms)``. Only converges when ``rho(p_i) < 1``.
    """
    p_i = np.asarray(p_i, dtype=float)
    term = np.array(rhs, dtype=float)
    total = term.copy()
    for m in range(1, max_terms + 1):
        term = p_i @ term
        total += term
        if np.max(np.abs(term), initial=0.0) < tol:
            return total, m
    raise SingularMatrixError(f"Neumann series did not settle within {max_terms} terms")


def power_norm(p_i, t: int) -> float:
    """``||p_i^t||_inf`` via repeated squaring."""
    p_i = np.asarray(p_i, dtype=float)
    result = np.eye(p_i.shape[0])
    base = p_i.copy()
    while t:
        if t & 1:
            result = result @ base
        base = base @ base
        t >>= 1
    return float(np.abs(result).sum(axis=1).max())


def spectral_radius_details(m: SystemMatrix, max_power: int = 1000, rtol: float = 1e-12) -> SpectralEstimate:
    """Power iteration on ``|p_i|`` plus the Gelfand bound at the final power.

    The estimate uses the geometric mean of two consecutive norm ratios so
    that matrices with eigenvalues ``+rho`` and ``-rho`` (bipartite
    structure, e.g. a path with zero self weight) still converge.
    """
    a = np.abs(m.p_i)
    v = np.ones(m.M)
    est = 0.0
    prev_ratio = None
    v_back = [v, v]
    it = 0
    for it in range(1, max_power + 1):
        w = a @ v
        nw = np.max(np.abs(w))
        if nw == 0.0:
            est = 0.0
            break
        ratio = nw / np.max(np.abs(v))
        new = ratio if prev_ratio is None else float(np.sqrt(ratio * prev_ratio))
        v = w / nw
        prev_ratio = ratio
        # the vector (compared two steps back, to allow a +-rho pair) must settle too;
        # stochastic rows keep the ratio at exactly 1 for the first few steps
        settled = np.max(np.abs(v - v_back[0])) <= 1e-9
        v_back = [v_back[1], v]
        if it > 2 and settled and abs(new - est) <= rtol * max(new, 1e-300):
            est = new
            break
        est = new
    bound = power_norm(a, it) ** (1.0 / it) if it else 0.0
    return SpectralEstimate(estimate=max(float(est), 0.0), gelfand_bound=float(bound), iterations=it, power=it)


def spectral_radius_bound(m: SystemMatrix, max_power: int = 1000) -> float:
    """Dominant-eigenvalue estimate of ``p_i``; see :func:`spectral_radius_details`."""
    return spectral_radius_details(m, max_power).estimate


def closed_form_limit(m: SystemMatrix, x_b, method: str = "direct") -> LimitResult:
    """Limit state ``[x_b, (I - p_i)^{-1} p_e x_b]`` of the synchronous dynamics.

    ``method`` is ``"direct"`` (elimination with partial pivoting) or
    ``"neumann"`` (truncated series, for large M).
    """
    x_b = np.asarray(x_b, dtype=float).reshape(-1)
    if m.K < 1:
        raise GraphError("closed-form limit needs at least one boundary node")
    if x_b.size != m.K:
        raise ValueError(f"x_b has {x_b.size} entries, expected {m.K}")
    rhs = m.p_e @ x_b
    a = np.eye(m.M) - m.p_i
    if method == "direct":
        x_i, iters = gauss_solve(a, rhs), 0
    elif method == "neumann":
        if not m.absorbing():
            raise SingularMatrixError("absorbing condition fails; Neumann series diverges")
        x_i, iters = neumann_solve(m.p_i, rhs)
    else:
        raise ValueError(f"unknown method {method!r}")
    resid = float(np.max(np.abs(a @ x_i - rhs), initial=0.0))
    return LimitResult(StateVector(x_b, x_i), resid, method, iters)


def limit_operator_rows(m: SystemMatrix) -> np.ndarray:
    """The nonzero lower-left block ``(I - p_i)^{-1} p_e`` of ``L^infinity``."""
    if m.K < 1:
        raise GraphError("limit operator needs at least one boundary node")
    return gauss_solve(np.eye(m.M) - m.p_i, m.p_e)


# -- matrix dump ------------------------------------------------------------------

def matrix_csv(m: SystemMatrix) -> str:
    L = m.full()
    header = [f"c{j}" for j in range(1, m.N + 1)]
    return csv_text(header, L)


def write_matrix_csv(m: SystemMatrix, path) -> None:
    Path(path).write_text(matrix_csv(m))


def read_matrix_csv(path) -> SystemMatrix:
    _, L = read_csv(path)
    return SystemMatrix.from_full(L)


__all__ = [
    "SystemMatrix", "StateVector", "LimitResult", "SpectralEstimate",
    "WeightError", "SingularMatrixError", "uniform_weights", "random_weights",
    "gauss_solve", "neumann_solve", "power_norm", "spectral_radius_details",
    "spectral_radius_bound", "closed_form_limit", "limit_operator_rows",
    "matrix_csv", "write_matrix_csv", "read_matrix_csv",
]
