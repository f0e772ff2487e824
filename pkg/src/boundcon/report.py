"""Matplotlib figures written next to the CSV/JSON artifacts.

Only imported when figures are requested; the numerical modules never
depend on matplotlib.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def _pick(n, k=3):
    """Up to ``k`` evenly spread column indices out of ``n``."""
    return sorted(set(np.linspace(0, n - 1, min(k, n)).round().astype(int).tolist()))


def limit_figure(x_inf, num_boundary, path):
    """Limit value of every internal node against the boundary range."""
    x_b, x_i = x_inf[:num_boundary], x_inf[num_boundary:]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.axhspan(x_b.min(), x_b.max(), color="0.85", lw=0, label="boundary range")
        ax.plot(np.arange(num_boundary + 1, x_inf.size + 1), x_i, "o", ms=3, label="internal limit")
        ax.set_xlabel("node")
        ax.set_ylabel("limit value")
        ax.legend(loc="best")
        return _save(fig, path)


def trajectory_figure(traj, limit, num_boundary, path, tracked=3):
    """Selected internal nodes over time, with their closed-form limits dashed."""
    X = traj.as_array()
    cols = [num_boundary + c for c in _pick(X.shape[1] - num_boundary, tracked)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for c in cols:
            line, = ax.plot(traj.steps, X[:, c], lw=1.2, label=f"node {c + 1}")
            if limit is not None:
                ax.axhline(limit[c], color=line.get_color(), ls="--", lw=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("value")
        ax.legend(loc="best")
        return _save(fig, path)


def montecarlo_figure(res, expected, limit, num_boundary, path, tracked=3):
    cols = [num_boundary + c for c in _pick(res.mean.shape[1] - num_boundary, tracked)]
    t = res.record_steps
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for c in cols:
            line, = ax.plot(t, res.mean[:, c], lw=1.2, label=f"node {c + 1} (mean of {res.reps})")
            ax.fill_between(t, res.mean[:, c] - 4 * res.stderr[:, c], res.mean[:, c] + 4 * res.stderr[:, c],
                            color=line.get_color(), alpha=0.15, lw=0)
            ax.plot(t, expected[:, c], color=line.get_color(), ls=":", lw=1)
            ax.axhline(limit[c], color=line.get_color(), ls="--", lw=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("mean value")
        ax.set_title(f"{res.model} gossip", fontsize=9)
        ax.legend(loc="best")
        return _save(fig, path)


def periodic_figure(xs, orbit, path, tracked=3):
    orbit = np.asarray(orbit)
    tau = orbit.shape[0]
    cols = _pick(xs.shape[1], tracked)
    t = np.arange(xs.shape[0])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for c in cols:
            line, = ax.plot(t, xs[:, c], lw=1, label=f"internal {c + 1}")
            ax.plot(t, orbit[t % tau, c], color=line.get_color(), ls="--", lw=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("value")
        ax.legend(loc="best")
        return _save(fig, path)


def attack_figure(report, path):
    honest = np.asarray(report["honest_final_mean"])
    attacked = np.asarray(report["attacked_final_mean"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        bins = np.linspace(min(honest.min(), attacked.min()) - 0.1, max(honest.max(), attacked.max()) + 0.1, 40)
        ax.hist(honest, bins=bins, alpha=0.6, label=f"honest (rate {report['honest_detection_rate']:.3f})")
        ax.hist(attacked, bins=bins, alpha=0.6, label=f"attacked (rate {report['attacked_detection_rate']:.3f})")
        ax.axvline(report["threshold"], color="k", lw=1, ls="--", label="threshold")
        ax.set_xlabel("final network value (average LLR)")
        ax.set_ylabel("trials")
        ax.legend(loc="best")
        return _save(fig, path)


def steering_figure(res, target, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(np.arange(res.values.size), res.values, lw=1.2, label=f"node {res.tracked}")
        ax.axhline(target, color="k", ls="--", lw=0.8, label="advertiser value")
        ax.set_xscale("symlog", linthresh=10)
        ax.set_xlabel("step")
        ax.set_ylabel("belief")
        ax.legend(loc="best")
        return _save(fig, path)
