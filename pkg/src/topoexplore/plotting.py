"""Deterministic SVG charts of explored volume over time."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402

from .harness import EpisodeMetrics  # noqa: E402

_SVG_RC = {"svg.hashsalt": "topoexplore", "svg.fonttype": "none"}


def _series(metrics: EpisodeMetrics | None):
    rows = metrics.rows if metrics is not None else []
    t = [r.time_s for r in rows]
    return t, [r.explored_volume_m3 for r in rows], [r.volume_increment_m3_s for r in rows]


def volume_figure(metrics: EpisodeMetrics | None, title: str = "") -> Figure:
    fig = Figure(figsize=(7, 5))
    ax_v, ax_i = fig.subplots(2, 1, sharex=True)
    t, vol, inc = _series(metrics)
    ax_v.plot(t, vol, color="C0")
    ax_v.set_ylabel("explored volume [m$^3$]")
    ax_i.step(t, inc, where="post", color="C1")
    ax_i.set_ylabel("increment [m$^3$/s]")
    ax_i.set_xlabel("time [s]")
    for ax in (ax_v, ax_i):
        ax.grid(alpha=0.3)
    if title:
        ax_v.set_title(title)
    fig.tight_layout()
    return fig


def compare_figure(named: dict[str, EpisodeMetrics], title: str = "") -> Figure:
    """Overlay of several episodes: volume vs time and volume vs distance."""
    fig = Figure(figsize=(9, 4))
    ax_t, ax_d = fig.subplots(1, 2)
    for i, (name, m) in enumerate(sorted(named.items())):
        t, vol, _ = _series(m)
        dist = [r.distance_traveled_m for r in m.rows]
        ax_t.plot(t, vol, color=f"C{i}", label=name)
        ax_d.plot(dist, vol, color=f"C{i}", label=name)
    ax_t.set_xlabel("time [s]")
    ax_d.set_xlabel("distance traveled [m]")
    ax_t.set_ylabel("explored volume [m$^3$]")
    for ax in (ax_t, ax_d):
        ax.grid(alpha=0.3)
        ax.legend(loc="lower right")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def save_svg(fig: Figure, path) -> None:
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
