"""Optional PNG renderings of CSV outputs (matplotlib is imported lazily)."""

from __future__ import annotations

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def diagram_figure(diagrams, path: str | Path, chi_1: float | None = None) -> Path:
    """Amplitude and leading eigenvalue against chi, one line per diagram."""
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 6))
    for d in diagrams:
        pts = sorted(d.points, key=lambda p: p.chi)
        chi = [p.chi for p in pts]
        ax1.plot(chi, [p.amplitude_mode for p in pts], "o-", ms=3, label=f"{d.branch} tau={d.params.tau:g}")
        ax2.plot(chi, [p.max_re_eig for p in pts], "s-", ms=3)
    if chi_1 is not None:
        for ax in (ax1, ax2):
            ax.axvline(chi_1, color="0.6", lw=0.8, ls="--")
    ax2.axhline(0.0, color="0.6", lw=0.8)
    ax1.set_ylabel("amplitude")
    ax2.set_ylabel("max Re eigenvalue")
    ax2.set_xlabel("chi")
    ax1.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def eigenvalue_figure(eigs, path: str | Path, title: str = "") -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([e.real for e in eigs], [e.imag for e in eigs], ".", ms=4)
    ax.axvline(0.0, color="0.6", lw=0.8)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def trajectory_figure(times, residuals, amplitudes, path: str | Path) -> Path:
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
    ax1.semilogy(times, residuals)
    ax1.set_ylabel("residual")
    ax2.plot(times, amplitudes)
    ax2.set_ylabel("amplitude")
    ax2.set_xlabel("t")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
