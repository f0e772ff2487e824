"""Command-line front end.

    boundcon run --config run.json [--output DIR] [--seed N] [--quiet] [--plot]
    boundcon validate FILE

Exit status: 0 success, 2 invalid input, 3 numerical failure (singular
system or no convergence). Nothing is written unless the run succeeds.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics, gossip, periodic, scenarios
from .graph import (
    Graph, GraphError, graph_from_dict, index_mapping, internal_nodes_reach_boundary,
    is_connected, load_graph, star_graph,
)
from .linalg import (
    SingularMatrixError, StateVector, SystemMatrix, WeightError, closed_form_limit,
    matrix_csv, random_weights, spectral_radius_details, uniform_weights,
)
from .serial import csv_text, dumps, read_json

log = logging.getLogger("boundcon")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

MODES = ("limit", "simulate", "gossip-polling", "gossip-pairwise", "periodic", "attack", "steer")
COMMON_KEYS = {"mode", "graph_path", "weights", "output_dir", "master_seed", "plot"}
MODE_KEYS = {
    "limit": ({"x_b"}, {"solver"}),
    "simulate": ({"x_b"}, {"x_i0", "tol", "max_steps", "record_stride"}),
    "gossip-polling": ({"x_b", "p"}, {"x_i0", "steps", "reps", "record_stride"}),
    "gossip-pairwise": ({"x_b", "alpha"}, {"x_i0", "steps", "reps", "record_stride", "pairs"}),
    "periodic": ({"schedule_path"}, {"x_i0", "steps"}),
    "attack": ({"scenario_path"}, {"trials", "max_steps", "tol"}),
    "steer": ({"x_b"}, {"x_i0", "horizon", "tracked"}),
}


class ConfigError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    pass


INPUT_ERRORS = (
    ConfigError, GraphError, WeightError, periodic.ScheduleError, scenarios.ScenarioError,
    gossip.GossipError, ValueError, OSError,
)


@dataclass
class RunConfig:
    mode: str
    graph_path: Path | None
    weights: dict
    output_dir: Path
    master_seed: int
    params: dict = field(default_factory=dict)
    plot: bool = False
    raw: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        mode = d.get("mode")
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {mode!r}")
        required, optional = MODE_KEYS[mode]
        unknown = set(d) - COMMON_KEYS - required - optional
        if unknown:
            raise ConfigError(f"unknown keys for mode {mode}: {sorted(unknown)}")
        missing = required - set(d)
        if mode != "attack" and "graph_path" not in d:
            missing.add("graph_path")
        if missing:
            raise ConfigError(f"missing keys for mode {mode}: {sorted(missing)}")
        base = Path(base_dir)
        weights = d.get("weights", {"kind": "uniform", "self_weight": 0.0})
        _check_weights_spec(weights)
        seed = d.get("master_seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"master_seed must be a non-negative integer, got {seed!r}")
        params = {k: d[k] for k in required | optional if k in d}
        for key in ("schedule_path", "scenario_path"):
            if key in params:
                params[key] = base / params[key]
        return cls(
            mode=mode,
            graph_path=base / d["graph_path"] if "graph_path" in d else None,
            weights=weights,
            output_dir=base / d.get("output_dir", "out"),
            master_seed=seed,
            params=params,
            plot=bool(d.get("plot", False)),
            raw=d,
            base_dir=base,
        )

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = read_json(path)
        except ValueError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data, path.parent)


def _check_weights_spec(w) -> None:
    if not isinstance(w, dict) or w.get("kind") not in ("uniform", "random"):
        raise ConfigError('weights must be {"kind": "uniform", "self_weight": s} or {"kind": "random", "seed": n}')
    extra = set(w) - {"kind", "self_weight", "seed"}
    if extra:
        raise ConfigError(f"unknown weights keys: {sorted(extra)}")


def build_weights(g: Graph, spec: dict) -> SystemMatrix:
    if spec["kind"] == "uniform":
        return uniform_weights(g, float(spec.get("self_weight", 0.0)))
    return random_weights(g, int(spec.get("seed", 0)))


def _vector(value, g: Graph, nodes, what: str) -> np.ndarray:
    """Accept a list in canonical order or a {label: value} mapping."""
    nodes = list(nodes)
    if isinstance(value, dict):
        lookup = index_mapping(g)
        out = np.empty(len(nodes))
        want = {n: k for k, n in enumerate(nodes)}
        seen = set()
        for lab, v in value.items():
            n = lookup.get(str(lab))
            if n not in want:
                raise ConfigError(f"{what}: {lab!r} is not one of the expected nodes")
            out[want[n]] = float(v)
            seen.add(n)
        if len(seen) != len(nodes):
            raise ConfigError(f"{what}: expected values for {len(nodes)} nodes, got {len(seen)}")
        return out
    arr = np.atleast_1d(np.array(value, dtype=float))
    if arr.shape != (len(nodes),):
        raise ConfigError(f"{what}: expected {len(nodes)} values, got shape {arr.shape}")
    return arr


def _initial_internal(cfg: RunConfig, g: Graph) -> np.ndarray:
    if "x_i0" in cfg.params:
        return _vector(cfg.params["x_i0"], g, g.internal_nodes, "x_i0")
    # default: x_i(0) ~ Normal(0, 5) from the master seed
    return np.random.default_rng(cfg.master_seed).normal(0.0, 5.0, g.num_internal)


def _pairwise_model(cfg: RunConfig, g: Graph, require=True) -> gossip.PairwiseModel:
    alpha = float(cfg.params["alpha"])
    pairs = cfg.params.get("pairs", "all")
    if pairs == "all":
        return gossip.PairwiseModel.uniform(g.num_boundary, g.num_nodes, alpha, require_boundary_pair=require)
    if pairs == "edges":
        return gossip.PairwiseModel.over_edges(g, alpha, require_boundary_pair=require)
    if not isinstance(pairs, list):
        raise ConfigError('pairs must be "all", "edges" or a list of [label, label, probability]')
    lookup = index_mapping(g)
    idx, probs = [], []
    for entry in pairs:
        if not isinstance(entry, list) or len(entry) != 3:
            raise ConfigError(f"pair entry must be [label, label, probability], got {entry!r}")
        a, b, pr = entry
        if str(a) not in lookup or str(b) not in lookup:
            raise ConfigError(f"pair ({a}, {b}) names an unknown node")
        idx.append((lookup[str(a)], lookup[str(b)]))
        probs.append(float(pr))
    return gossip.PairwiseModel(idx, probs, alpha, g.num_boundary, g.num_nodes, require_boundary_pair=require)


# -- modes ------------------------------------------------------------------------
# Each returns (artifacts: {filename: text}, summary: dict, figures: list of callables)

def _limit_payload(g, m, res, spec):
    return {
        "labels": [g.label_of(n) for n in range(1, g.num_nodes + 1)],
        "x_b": res.x_inf.x_b,
        "x_i": res.x_inf.x_i,
        "x": res.x_inf.full(),
        "solver_residual": res.solver_residual,
        "method": res.method,
        "iterations": res.iterations,
        "spectral_radius": spec.estimate,
        "gelfand_bound": spec.gelfand_bound,
    }


def _require_absorbing(g: Graph, m: SystemMatrix):
    if g.num_boundary < 1 or not internal_nodes_reach_boundary(g) or not m.absorbing():
        raise NumericalFailure("absorbing condition fails: some internal node cannot reach a boundary node")


def _run_limit(cfg, g, m):
    x_b = _vector(cfg.params["x_b"], g, g.boundary_nodes, "x_b")
    _require_absorbing(g, m)
    res = closed_form_limit(m, x_b, cfg.params.get("solver", "direct"))
    spec = spectral_radius_details(m)
    arts = {"limit.json": dumps(_limit_payload(g, m, res, spec)), "matrix.csv": matrix_csv(m)}
    summary = {"solver_residual": res.solver_residual, "spectral_radius": spec.estimate}

    def fig(outdir):
        from . import report
        return report.limit_figure(res.x_inf.full(), g.num_boundary, outdir / "limit.png")

    return arts, summary, [fig]


def _run_simulate(cfg, g, m):
    x_b = _vector(cfg.params["x_b"], g, g.boundary_nodes, "x_b")
    x0 = StateVector(x_b, _initial_internal(cfg, g))
    p = cfg.params
    traj = dynamics.iterate_until_convergence(
        m, x0, float(p.get("tol", 1e-10)), int(p.get("max_steps", 100_000)), int(p.get("record_stride", 1))
    )
    if not traj.converged:
        raise NumericalFailure(f"no convergence within {traj.steps[-1]} steps (last change {traj.final_delta:.3e})")
    arts = {"trajectory.csv": dynamics.trajectory_csv(traj)}
    summary = {"converged_at": traj.converged_at, "final_delta": traj.final_delta, "absorbing": traj.absorbing}
    lim = None
    if g.num_boundary >= 1 and m.absorbing():
        res = closed_form_limit(m, x_b)
        lim = res.x_inf.full()
        arts["limit.json"] = dumps(_limit_payload(g, m, res, spectral_radius_details(m)))
        summary["max_gap_to_limit"] = float(np.max(np.abs(traj.final.full() - lim)))

    def fig(outdir, traj=traj, lim=lim, K=g.num_boundary):
        from . import report
        return report.trajectory_figure(traj, lim, K, outdir / "trajectory.png")

    return arts, summary, [fig]


def _run_gossip(cfg, g, m, kind):
    x_b = _vector(cfg.params["x_b"], g, g.boundary_nodes, "x_b")
    x0 = StateVector(x_b, _initial_internal(cfg, g))
    p = cfg.params
    if kind == gossip.POLLING:
        model = gossip.PollingModel(m, float(p["p"]))
    else:
        model = _pairwise_model(cfg, g)
    _require_absorbing(g, gossip.expected_system(kind, model))
    steps, reps = int(p.get("steps", 200)), int(p.get("reps", 1000))
    res = gossip.monte_carlo_mean(kind, model, x0, steps, reps, cfg.master_seed, int(p.get("record_stride", 1)))
    expected = gossip.expected_mean_path(kind, model, x0, res.record_steps)
    lim = closed_form_limit(gossip.expected_system(kind, model), x_b).x_inf.full()
    payload = res.to_dict()
    payload["expected"] = expected.tolist()
    payload["limit"] = lim.tolist()
    z = np.abs(res.mean[-1] - expected[-1])[g.num_boundary:]
    se = res.stderr[-1][g.num_boundary:]
    summary = {"max_abs_gap_final": float(z.max()), "max_stderr_final": float(se.max())}

    def fig(outdir):
        from . import report
        return report.montecarlo_figure(res, expected, lim, g.num_boundary, outdir / "montecarlo.png")

    return {"montecarlo.json": dumps(payload)}, summary, [fig]


def _run_periodic(cfg, g, m):
    sched = periodic.load_schedule(cfg.params["schedule_path"])
    sched.check(m)
    _require_absorbing(g, m)
    orbit = periodic.periodic_limit(m, sched)
    defect = periodic.orbit_defect(m, sched, orbit)
    x_i0 = _initial_internal(cfg, g)
    steps = int(cfg.params.get("steps", 10 * sched.period))
    xs = periodic.simulate(m, sched, x_i0, steps)
    header = ["t"] + [f"x_{k}" for k in range(1, g.num_nodes + 1)]
    rows = ([t, *sched.value_at(t), *xs[t]] for t in range(steps + 1))
    payload = {"period": sched.period, "orbit": [o.tolist() for o in orbit], "defect": defect}
    summary = {"period": sched.period, "orbit_defect": defect}

    def fig(outdir):
        from . import report
        return report.periodic_figure(xs, orbit, outdir / "periodic.png")

    return {"orbit.json": dumps(payload), "trajectory.csv": csv_text(header, rows)}, summary, [fig]


def _run_attack(cfg, g):
    path = cfg.params["scenario_path"]
    scn, trials = scenarios.scenario_from_dict(read_json(path), graph=g, base_dir=Path(path).parent)
    if "trials" in cfg.params:
        trials = int(cfg.params["trials"])
    max_steps = int(cfg.params.get("max_steps", 100_000))
    tol = float(cfg.params.get("tol", 1e-12))
    report_ = scenarios.detection_trials(scn, trials, cfg.master_seed, max_steps, tol)
    one = scenarios.run_attack(scn, max_steps, scenarios.trial_rng(cfg.master_seed, 0), tol=tol)
    if not one.converged:
        raise NumericalFailure("attacked network did not converge")
    report_["example_run"] = one.to_dict()
    report_["mu"] = scn.mu
    report_["threshold"] = scn.threshold
    report_["truth"] = scn.truth
    summary = {k: report_[k] for k in ("honest_detection_rate", "attacked_detection_rate", "attacked_all_below_threshold")}

    def fig(outdir):
        from . import report
        return report.attack_figure(report_, outdir / "attack.png")

    return {"attack_report.json": dumps(report_)}, summary, [fig], scn.graph


def _run_steer(cfg, g, m):
    if g.num_boundary != 1:
        raise ConfigError("steer mode needs exactly one boundary (advertiser) node")
    x_b = _vector(cfg.params["x_b"], g, g.boundary_nodes, "x_b")
    horizon = int(cfg.params.get("horizon", 10_000))
    tracked = None
    if "tracked" in cfg.params:
        tracked = index_mapping(g).get(str(cfg.params["tracked"]))
        if tracked is None:
            raise ConfigError(f"tracked node {cfg.params['tracked']!r} not in graph")
    res = scenarios.advertiser_steering(g, float(x_b[0]), _initial_internal(cfg, g), horizon, tracked=tracked, weights=m)
    header = ["t", f"x_{res.tracked}"]
    text = csv_text(header, ([t, v] for t, v in enumerate(res.values)))
    summary = {"tracked": res.tracked, "final": float(res.values[-1]), "gap": float(abs(res.values[-1] - x_b[0]))}

    def fig(outdir):
        from . import report
        return report.steering_figure(res, float(x_b[0]), outdir / "steering.png")

    return {"steering.csv": text}, summary, [fig]


def execute(cfg: RunConfig):
    """Run one mode; returns (graph, artifacts, summary, figure makers)."""
    g = None
    if cfg.graph_path is not None:
        g = load_graph(cfg.graph_path)
    if cfg.mode == "attack":
        if g is None:
            raw = read_json(cfg.params["scenario_path"])
            spec = raw.get("graph") if isinstance(raw, dict) else None
            if spec is None:
                raise ConfigError("attack mode needs graph_path or a graph inside the scenario")
            base = Path(cfg.params["scenario_path"]).parent
            g = graph_from_dict(spec) if isinstance(spec, dict) else load_graph(base / spec)
        arts, summary, figs, g = _run_attack(cfg, g)
        return g, arts, summary, figs
    m = build_weights(g, cfg.weights)
    if cfg.mode == "limit":
        out = _run_limit(cfg, g, m)
    elif cfg.mode == "simulate":
        out = _run_simulate(cfg, g, m)
    elif cfg.mode == "gossip-polling":
        out = _run_gossip(cfg, g, m, gossip.POLLING)
    elif cfg.mode == "gossip-pairwise":
        out = _run_gossip(cfg, g, m, gossip.PAIRWISE)
    elif cfg.mode == "periodic":
        out = _run_periodic(cfg, g, m)
    else:
        out = _run_steer(cfg, g, m)
    return (g, *out)


def metadata(cfg: RunConfig, g: Graph, artifacts, summary) -> dict:
    return {
        "mode": cfg.mode,
        "config": cfg.raw,
        "seed": cfg.master_seed,
        "index_mapping": index_mapping(g),
        "versions": {
            "boundcon": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "artifacts": sorted(artifacts),
        "summary": summary,
    }


def run(cfg: RunConfig) -> int:
    """Execute a validated config and write its artifacts; returns an exit code."""
    try:
        g, arts, summary, figs = execute(cfg)
    except (SingularMatrixError, NumericalFailure) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except INPUT_ERRORS as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    for name, text in arts.items():
        (out / name).write_text(text)
    (out / "metadata.json").write_text(dumps(metadata(cfg, g, arts, summary)))
    if cfg.plot:
        _render(figs, out)
    for name in sorted(arts):
        log.info("wrote %s", out / name)
    log.info("summary: %s", summary)
    return EXIT_OK


def _render(figs, out: Path) -> None:
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        log.warning("matplotlib not installed; skipping figures (pip install 'artifact[plot]')")
        return
    figdir = out / "figures"
    figdir.mkdir(exist_ok=True)
    for make in figs:
        log.info("wrote %s", make(figdir))


# -- validate -----------------------------------------------------------------------

def _graph_checks(g: Graph, checks: list) -> None:
    checks.append(("graph.connected", "info", str(is_connected(g)).lower()))
    if g.num_boundary < 1:
        checks.append(("graph.absorbing", "fail", "no boundary nodes"))
        return
    ok = internal_nodes_reach_boundary(g)
    checks.append(("graph.absorbing", "pass" if ok else "fail",
                   "every internal node reaches a boundary node" if ok else "some internal node cannot reach a boundary node"))


def _store(holder, key, value):
    holder[key] = value


def _try(checks, name, fn):
    try:
        detail = fn()
    except Exception as exc:  # every failure becomes a named check
        checks.append((name, "fail", str(exc)))
        return False
    checks.append((name, "pass", detail if isinstance(detail, str) else "ok"))
    return True


def validate_path(path) -> list:
    """Structural checks for a graph, config, schedule or scenario file."""
    path = Path(path)
    checks = []
    data = read_json(path)
    if isinstance(data, dict) and "boundary" in data:
        holder = {}
        if _try(checks, "graph.parse", lambda: _store(holder, "g", graph_from_dict(data))):
            _graph_checks(holder["g"], checks)
        return checks
    if isinstance(data, dict) and "period" in data:
        _try(checks, "schedule.shape", lambda: periodic.schedule_from_dict(data))
        return checks
    if isinstance(data, dict) and "mu" in data:
        # without an embedded graph, check the remaining fields against a one-edge stand-in
        stand_in = None if "graph" in data else star_graph(1, center_boundary=True)
        _try(checks, "scenario.parse", lambda: scenarios.scenario_from_dict(data, graph=stand_in, base_dir=path.parent))
        return checks

    holder = {}
    if not _try(checks, "config.keys", lambda: _store(holder, "cfg", RunConfig.from_dict(data, path.parent))):
        return checks
    cfg = holder["cfg"]
    if cfg.graph_path is None:
        if cfg.mode == "attack":
            _try(checks, "scenario.parse",
                 lambda: _store(holder, "scn", scenarios.scenario_from_dict(
                     read_json(cfg.params["scenario_path"]), base_dir=cfg.params["scenario_path"].parent)))
        return checks
    if not _try(checks, "graph.parse", lambda: _store(holder, "g", load_graph(cfg.graph_path))):
        return checks
    g = holder["g"]
    _graph_checks(g, checks)
    if cfg.mode == "attack":
        _try(checks, "scenario.parse",
             lambda: scenarios.scenario_from_dict(read_json(cfg.params["scenario_path"]), graph=g))
        return checks
    if not _try(checks, "weights.stochastic", lambda: _store(holder, "m", build_weights(g, cfg.weights))):
        return checks
    m = holder["m"]
    checks.append(("weights.support", "pass" if m.respects(g) else "fail", "weights only on edges and diagonal"))
    if cfg.mode in ("limit", "simulate", "gossip-polling", "gossip-pairwise", "steer"):
        _try(checks, "boundary.values", lambda: _vector(cfg.params["x_b"], g, g.boundary_nodes, "x_b"))
    if "x_i0" in cfg.params:
        _try(checks, "internal.values", lambda: _vector(cfg.params["x_i0"], g, g.internal_nodes, "x_i0"))
    if cfg.mode == "periodic":
        def sched_check():
            s = periodic.load_schedule(cfg.params["schedule_path"])
            s.check(m)
            return f"period {s.period}, {s.K} boundary values per phase"
        _try(checks, "schedule.shape", sched_check)
    if cfg.mode == "gossip-polling":
        _try(checks, "polling.probability", lambda: gossip.PollingModel(m, float(cfg.params["p"])))
    if cfg.mode == "gossip-pairwise":
        if _try(checks, "pairwise.distribution", lambda: _store(holder, "pm", _pairwise_model(cfg, g, require=False))):
            pm = holder["pm"]
            ok = gossip.has_boundary_pair(pm.pairs, pm.probs, pm.num_boundary)
            checks.append(("pairwise.boundary_pair", "pass" if ok else "fail",
                           "some boundary-internal pair has positive probability" if ok
                           else "no boundary-internal pair has positive probability"))
    return checks


# -- entry point ------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boundcon", description="Consensus averaging with boundary nodes.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute one experiment mode from a JSON config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--output", type=Path, help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    r.add_argument("--quiet", action="store_true")
    r.add_argument("--plot", action="store_true", help="also render PNG figures (needs matplotlib)")
    v = sub.add_parser("validate", help="run structural checks on a config, graph, schedule or scenario file")
    v.add_argument("path", type=Path)
    v.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    if args.command == "validate":
        try:
            checks = validate_path(args.path)
        except (OSError, ValueError) as exc:
            log.error("cannot read %s: %s", args.path, exc)
            return EXIT_INVALID
        for name, status, detail in checks:
            print(f"{status.upper():4s} {name}: {detail}")
        return EXIT_INVALID if any(s == "fail" for _, s, _ in checks) else EXIT_OK

    try:
        cfg = RunConfig.load(args.config)
    except (ConfigError, OSError) as exc:
        log.error("invalid config: %s", exc)
        return EXIT_INVALID
    if args.output is not None:
        cfg.output_dir = args.output
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            log.error("--seed must be an unsigned 64-bit integer")
            return EXIT_INVALID
        cfg.master_seed = args.seed
    cfg.plot = cfg.plot or args.plot
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
