"""Applications: a malicious node attacking distributed detection, advertiser steering.

Detection model: every node observes one scalar drawn from the true
hypothesis and starts from its own log-likelihood-ratio term. Honest
averaging drives every node to the network-average LLR, which is compared
with ``threshold``. A faulty node (node 1, the single boundary node) pins
its value at ``mu`` instead, and the whole network converges to ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import iterate_until_convergence
from .graph import Graph, graph_from_dict, internal_nodes_reach_boundary, load_graph, neighbors
from .linalg import StateVector, SystemMatrix, random_weights


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Hypothesis:
    mean: float
    std: float

    def __post_init__(self):
        if not (self.std > 0 and math.isfinite(self.std)):
            raise ScenarioError(f"standard deviation must be positive, got {self.std}")

    def logpdf(self, y):
        z = (np.asarray(y, dtype=float) - self.mean) / self.std
        return -0.5 * z * z - math.log(self.std) - 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class DetectionScenario:
    graph: Graph
    mu: float
    threshold: float
    h0: Hypothesis = Hypothesis(0.0, 1.0)
    h1: Hypothesis = Hypothesis(1.0, 1.0)
    truth: str = "H1"
    weights_seed: int = 0

    def __post_init__(self):
        if self.graph.num_boundary != 1:
            raise ScenarioError(f"detection scenario needs exactly one faulty (boundary) node, got {self.graph.num_boundary}")
        if self.truth not in ("H0", "H1"):
            raise ScenarioError(f"truth must be 'H0' or 'H1', got {self.truth!r}")
        if self.mu == self.threshold:
            raise ScenarioError("mu equal to the threshold is neither a miss nor a false-alarm attack")

    @property
    def attack(self) -> str:
        return "miss" if self.mu < self.threshold else "false-alarm"

    def weights(self) -> SystemMatrix:
        return random_weights(self.graph, self.weights_seed)


def node_log_likelihood_ratios(scn: DetectionScenario, rng: np.random.Generator) -> np.ndarray:
    """One observation per node from the true hypothesis, mapped to log P1/P0."""
    for h in (scn.h0, scn.h1):
        if not h.std > 0:
            raise ScenarioError("degenerate hypothesis (zero standard deviation)")
    src = scn.h1 if scn.truth == "H1" else scn.h0
    y = rng.normal(src.mean, src.std, scn.graph.num_nodes)
    return scn.h1.logpdf(y) - scn.h0.logpdf(y)


def decide(values, threshold: float) -> list:
    return ["H1" if v >= threshold else "H0" for v in np.asarray(values)]


@dataclass
class AttackReport:
    final_values: np.ndarray
    all_below_threshold: bool
    decisions: list
    converged: bool
    steps: int
    llr: np.ndarray = field(repr=False)

    @property
    def detection_rate(self) -> float:
        return sum(d == "H1" for d in self.decisions) / len(self.decisions)

    def to_dict(self) -> dict:
        return {
            "final_values": self.final_values.tolist(),
            "all_below_threshold": self.all_below_threshold,
            "decisions": self.decisions,
            "converged": self.converged,
            "steps": self.steps,
            "llr": self.llr.tolist(),
        }


def run_attack(
    scn: DetectionScenario,
    steps: int,
    rng: np.random.Generator | None = None,
    llr=None,
    weights: SystemMatrix | None = None,
    tol: float = 1e-12,
) -> AttackReport:
    """Internal nodes start at their LLR terms; node 1 holds ``mu`` forever."""
    if not internal_nodes_reach_boundary(scn.graph):
        raise ScenarioError("faulty node cannot reach every internal node")
    if llr is None:
        llr = node_log_likelihood_ratios(scn, rng if rng is not None else np.random.default_rng())
    m = weights if weights is not None else scn.weights()
    traj = iterate_until_convergence(m, StateVector([scn.mu], llr[1:]), tol, steps, record_stride=steps)
    final = traj.final.full()
    return AttackReport(
        final_values=final,
        all_below_threshold=bool(np.all(final < scn.threshold)),
        decisions=decide(final, scn.threshold),
        converged=traj.converged,
        steps=traj.steps[-1],
        llr=np.asarray(llr, dtype=float),
    )


def metropolis_weights(g: Graph) -> np.ndarray:
    """Symmetric doubly stochastic averaging matrix over all N nodes."""
    N = g.num_nodes
    W = np.zeros((N, N))
    deg = [len(neighbors(g, n)) for n in range(1, N + 1)]
    for i, j in g.edges:
        W[i - 1, j - 1] = W[j - 1, i - 1] = 1.0 / (1 + max(deg[i - 1], deg[j - 1]))
    W[np.diag_indices(N)] = 1.0 - W.sum(axis=1)
    return W


def honest_consensus(g: Graph, values, tol: float = 1e-12, max_steps: int = 1_000_000):
    """Plain averaging with every node honest; returns ``(final, steps)``."""
    W = metropolis_weights(g)
    x = np.array(values, dtype=float)
    for t in range(1, max_steps + 1):
        new = W @ x
        if np.max(np.abs(new - x)) < tol:
            return new, t
        x = new
    return x, max_steps


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial,))))


def detection_trials(scn: DetectionScenario, trials: int, seed: int, steps: int = 100_000, tol: float = 1e-12) -> dict:
    """Empirical detection rates with and without the faulty node.

    Each trial draws one set of observations and runs both the honest
    control and the attacked network on it. A trial's detection rate is
    the fraction of nodes deciding H1.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = scn.weights()
    honest_rates, attacked_rates, honest_finals, attacked_finals = [], [], [], []
    all_below = True
    for k in range(trials):
        llr = node_log_likelihood_ratios(scn, trial_rng(seed, k))
        final, _ = honest_consensus(scn.graph, llr, tol)
        honest_rates.append(np.mean(final >= scn.threshold))
        honest_finals.append(float(final.mean()))
        rep = run_attack(scn, steps, llr=llr, weights=m, tol=tol)
        attacked_rates.append(rep.detection_rate)
        attacked_finals.append(float(rep.final_values.mean()))
        all_below &= rep.all_below_threshold
    return {
        "attack": scn.attack,
        "trials": trials,
        "seed": seed,
        "honest_detection_rate": float(np.mean(honest_rates)),
        "attacked_detection_rate": float(np.mean(attacked_rates)),
        "attacked_all_below_threshold": bool(all_below),
        "honest_final_mean": honest_finals,
        "attacked_final_mean": attacked_finals,
    }


@dataclass
class SteeringResult:
    tracked: int
    values: np.ndarray
    final_state: np.ndarray


def advertiser_steering(
    g: Graph,
    x_b0: float,
    x_i0,
    horizon: int,
    seed: int = 0,
    tracked: int | None = None,
    weights: SystemMatrix | None = None,
) -> SteeringResult:
    """Belief of one internal node over time with a single fixed advertiser."""
    if g.num_boundary != 1:
        raise ScenarioError("steering needs exactly one advertiser (boundary node)")
    if not internal_nodes_reach_boundary(g):
        raise ScenarioError("advertiser cannot reach every internal node")
    m = weights if weights is not None else random_weights(g, seed)
    tracked = g.num_boundary + 1 if tracked is None else tracked
    if not g.num_boundary < tracked <= g.num_nodes:
        raise ScenarioError(f"tracked node {tracked} is not internal")
    x = np.array(x_i0, dtype=float)
    drive = m.p_e[:, 0] * float(x_b0)
    out = np.empty(horizon + 1)
    col = tracked - g.num_boundary - 1
    out[0] = x[col]
    for t in range(1, horizon + 1):
        x = drive + m.p_i @ x
        out[t] = x[col]
    return SteeringResult(tracked, out, np.concatenate([[x_b0], x]))


# -- config -------------------------------------------------------------------

_SCENARIO_KEYS = {"graph", "mu", "threshold", "h0", "h1", "truth", "weights_seed", "trials"}


def scenario_from_dict(d: dict, graph: Graph | None = None, base_dir=".") -> tuple:
    """Parse a scenario document; returns ``(scenario, trials)``.

    ``graph`` in the document may be an inline graph object or a path
    relative to ``base_dir``; an explicit ``graph`` argument wins.
    """
    if not isinstance(d, dict):
        raise ScenarioError("scenario document must be a JSON object")
    unknown = set(d) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    if graph is None:
        spec = d.get("graph")
        if spec is None:
            raise ScenarioError("scenario needs a graph")
        graph = graph_from_dict(spec) if isinstance(spec, dict) else load_graph(Path(base_dir) / spec)
    try:
        hyp = {k: Hypothesis(float(d[k]["mean"]), float(d[k]["std"])) for k in ("h0", "h1") if k in d}
        scn = DetectionScenario(
            graph=graph,
            mu=float(d["mu"]),
            threshold=float(d["threshold"]),
            truth=d.get("truth", "H1"),
            weights_seed=int(d.get("weights_seed", 0)),
            **hyp,
        )
    except KeyError as exc:
        raise ScenarioError(f"scenario missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    return scn, int(d.get("trials", 200))
