"""Figure rendering for study reports and estimated curves.

Each renderer takes a report (or curve) and writes a PNG next to the
delimited outputs; nothing here feeds back into the numeric pipeline.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .estimators import CurveEstimate


def plot_error_study(report: dict, path) -> None:
    """Log-log mean error against tree size, with a -2/5 reference slope."""
    summary = report["summary"]
    sizes = np.array([row["tree_size"] for row in summary], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for key, style, label in (("mean_e0", "o-", "type 0"), ("mean_e1", "s--", "type 1")):
        ax.loglog(sizes, [row[key] for row in summary], style, label=f"mean error, {label}")
    anchor = summary[0]["mean_e0"] * 1.2
    ax.loglog(sizes, anchor * (sizes / sizes[0]) ** -0.4, "r-", alpha=0.6,
              label="slope -2/5")
    ax.set_xlabel("tree size")
    ax.set_ylabel("mean relative error")
    slope = report.get("slope")
    title = "Estimation error vs tree size"
    if slope:
        title += f" (fitted slopes {slope['e0']:.3f}, {slope['e1']:.3f})"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rejection_study(report: dict, path) -> None:
    summary = report["summary"]
    sizes = [row["tree_size"] for row in summary]
    rates = [row["rejection_rate"] for row in summary]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.semilogx(sizes, rates, "o-")
    ax.axhline(report["config"]["level"], color="r", alpha=0.6, label="nominal level")
    ax.set_xlabel("tree size")
    ax.set_ylabel("rejection proportion")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"Rejection rate, case {report['config'].get('case', '?')}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_power_study(report: dict, path) -> None:
    summary = report["summary"]
    taus = [row["tau"] for row in summary]
    rates = [row["rejection_rate"] for row in summary]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(taus, rates, "o-")
    ax.axhline(report["config"]["level"], color="r", alpha=0.6, label="nominal level")
    ax.set_xlabel("tau")
    ax.set_ylabel("rejection proportion")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Power along the interpolation parameter")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bands(report: dict, path) -> None:
    rows = report["extras"]["bands"] if "extras" in report else report["bands"]
    xs = np.array([row["x"] for row in rows])
    fig, ax = plt.subplots(figsize=(7, 5))
    for prefix, color in (("f0", "tab:blue"), ("f1", "tab:green")):
        lower = np.array([row[f"{prefix}_lower"] for row in rows])
        upper = np.array([row[f"{prefix}_upper"] for row in rows])
        truth = np.array([row[f"{prefix}_true"] for row in rows])
        ax.fill_between(xs, lower, upper, color=color, alpha=0.25,
                        label=f"{prefix} band")
        ax.plot(xs, truth, color=color, lw=2, label=f"{prefix} true")
    ax.set_xlabel("x")
    ax.set_ylabel("autoregressive functions")
    ax.set_title("Monte Carlo confidence bands")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_curve(curve: CurveEstimate, path) -> None:
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4.5))
    good = ~curve.flags
    ax0.plot(curve.x[good], curve.f0[good], label="f0 estimate", color="tab:blue")
    ax0.plot(curve.x[good], curve.f1[good], label="f1 estimate", color="tab:green")
    ax0.set_xlabel("x")
    ax0.set_title(f"Autoregressive estimates ({curve.kind})")
    ax0.legend()
    ax1.plot(curve.x[good], curve.nu[good], color="tab:red")
    ax1.set_xlabel("x")
    ax1.set_title("Invariant density estimate")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
