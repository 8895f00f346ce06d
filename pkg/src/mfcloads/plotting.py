"""Static figures for the report path: observable decay and spectrum scatter."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.4),
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "mfcloads",  # stable ids so identical data give identical files
    "svg.fonttype": "none",
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if path.suffix == ".svg" else {}
    fig.savefig(path, bbox_inches="tight", metadata=meta)
    plt.close(fig)
    return path


def plot_decay(series, path, fit=None, observables=("n_up", "h1"), title=None):
    """Log-scale ``|n_up - 1/2|`` (and ``H1`` if present) against time.

    ``fit`` may be a :class:`~mfcloads.analysis.DecayFit`; its exponential is
    overlaid on its window.
    """
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        t = series.times
        if "n_up" in observables:
            ax.semilogy(t, np.abs(series.deviation), lw=0.8, label=r"$|N_\uparrow - 1/2|$")
        if "h1" in observables and series.h1 is not None:
            ax.semilogy(t, series.h1, lw=0.8, label=r"$H_1$")
        if fit is not None:
            t0, t1 = fit.window
            tt = np.linspace(t0, t1, 50)
            sel = (t >= t0) & (t <= t1)
            y = np.abs(series.deviation[sel]) if fit.observable == "N_UP_DEV" else series.h1[sel]
            amp = np.exp(np.mean(np.log(np.maximum(y, 1e-300)) + fit.rate * t[sel]))
            ax.semilogy(tt, amp * np.exp(-fit.rate * tt), "k--", lw=0.8,
                        label=f"rate {fit.rate:.3g}")
        ax.set_xlabel("t")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_spectrum(roots, path, title=None):
    """Scatter of eigenvalues in the complex plane, one marker per branch."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for branch, marker in (("-", "o"), ("+", "s")):
            pts = [e.lam for e in roots if e.branch.value == branch]
            if pts:
                ax.plot([z.real for z in pts], [z.imag for z in pts], marker, ms=4, ls="none",
                        mfc="none", label=f"{branch} branch")
        ax.axhline(0, color="0.7", lw=0.5)
        ax.set_xlabel(r"Re $\lambda$")
        ax.set_ylabel(r"Im $\lambda$")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_regime_map(rows, path):
    """Leading decay rate over ``(r, s)`` from :func:`mfcloads.spectral.regime_grid` rows."""
    r = np.array(sorted({row[0] for row in rows}))
    s = np.array(sorted({row[1] for row in rows}))
    z = np.full((s.size, r.size), np.nan)
    for row in rows:
        z[np.searchsorted(s, row[1]), np.searchsorted(r, row[0])] = row[3]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for j, sv in enumerate(s):
            ax.loglog(r, z[j], marker=".", lw=0.8, label=f"s={sv:g}")
        ax.set_xlabel("r")
        ax.set_ylabel(r"Re $\lambda_0$")
        ax.legend(frameon=False)
        return _save(fig, path)
