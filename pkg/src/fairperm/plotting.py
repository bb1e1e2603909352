"""PNG figures for CLI reports.  matplotlib is imported only when a figure is requested."""

from __future__ import annotations

import numpy as np

from .errors import InvalidConfiguration


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise InvalidConfiguration("figures need matplotlib: pip install 'fairperm[plot]'") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def permutation_histogram(report, path: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(report.distribution, bins=50, color="0.7", edgecolor="0.4")
    ax.axvline(report.observed_S, color="tab:red", label=f"observed ({report.observed_S:.3g})")
    ax.set_xlabel("replicate statistic")
    ax.set_ylabel("count")
    ax.set_title(f"p = {report.p_value:.4g}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_curves(payload: dict, path: str) -> None:
    plt = _pyplot()
    rows = payload["rows"]
    tau = [r["tau"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    for ax, k, name in zip(axes, ("0", "1"), ("FPR gap", "recall gap")):
        delta = np.array([r["delta_" + k] for r in rows], dtype=float)
        thr = np.array([np.nan if r["threshold_" + k] is None else r["threshold_" + k] for r in rows])
        hit = np.array([r["detected_" + k] for r in rows], dtype=bool)
        ax.plot(tau, np.abs(delta), color="tab:blue", label="|gap|")
        ax.plot(tau, thr, color="0.4", linestyle="--", label="rejection threshold")
        ax.scatter(np.asarray(tau)[hit], np.abs(delta)[hit], color="tab:red", s=12, label="detected")
        ax.set_xlabel("threshold")
        ax.set_title(name)
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def pvalue_histograms(studies: dict, path: str) -> None:
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(studies), figsize=(4 * len(studies), 3.5), squeeze=False)
    for ax, (proc, study) in zip(axes[0], studies.items()):
        ax.bar(np.arange(10) / 10 + 0.05, study.histogram, width=0.1, color="0.7", edgecolor="0.3")
        ax.axhline(0.1, color="tab:red", linestyle=":")
        ax.set_xlim(0, 1)
        ax.set_title(f"{proc.value}: {study.rejection_probability:.3f}")
        ax.set_xlabel("p-value")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render(command: str, result, path: str) -> None:
    if command == "test":
        permutation_histogram(result, path)
    elif command == "sweep":
        sweep_curves(result, path)
    elif command == "simulate":
        pvalue_histograms(result, path)
    else:
        raise InvalidConfiguration(f"no figure for the {command} command")
