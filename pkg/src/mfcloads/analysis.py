"""Decay-rate and oscillation-frequency fits of sampled observables."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter1d, median_filter

from .series import TimeSeries

log = logging.getLogger(__name__)


class Observable(str, enum.Enum):
    N_UP_DEV = "N_UP_DEV"
    H1 = "H1"


class FitWindowError(ValueError):
    pass


@dataclass(frozen=True)
class FitSettings:
    """Tunable thresholds of :func:`fit_decay`.

    ``tail_fraction`` of the samples at the end define the plateau; the fit
    window keeps envelope values above ``plateau_factor`` times the plateau.
    ``t_min`` skips an initial transient before the first envelope maximum is
    searched.  A fit spanning fewer than ``min_efoldings`` is flagged partial.
    Oscillations are only looked for while a running median over
    ``smooth_fraction`` of the record stays above the window threshold.
    With ``subtract_plateau`` the floor is removed from the envelope before
    taking logarithms, provided the tail really is flat: the medians of its
    two halves differ by less than ``floor_flatness`` in log (or
    their sampling scatter, if larger).
    """

    tail_fraction: float = 0.1
    plateau_factor: float = 3.0
    t_min: float = 0.0
    t_max: float | None = None
    min_efoldings: float = 5.0
    min_crossings: int = 3
    subtract_plateau: bool = True
    floor_flatness: float = 0.1
    smooth_fraction: float = 0.02


@dataclass(frozen=True)
class DecayFit:
    rate: float
    freq: float
    window: tuple[float, float]
    plateau_level: float
    r2: float
    partial: bool = False
    n_filtered: int = 0
    n_points: int = 0
    observable: str = Observable.N_UP_DEV.value
    note: str = ""

    def to_dict(self):
        return asdict(self)


def _signal(series: TimeSeries, observable: Observable):
    if observable is Observable.H1:
        if series.h1 is None:
            raise ValueError("series carries no H1 samples")
        return series.h1.copy(), series.deviation
    dev = series.deviation
    return np.abs(dev), dev


def crossing_times(t, y, hysteresis=0.0):
    """Times where ``y`` changes sign, ignoring wiggles smaller than ``hysteresis``.

    A crossing is counted when the signal travels from below ``-h`` to above
    ``+h`` (or back); its time is the linear interpolation of the zero between
    the bracketing samples.
    """
    out = []
    state = 0
    last_sign_idx = None
    for i in range(len(y)):
        if y[i] > hysteresis:
            new = 1
        elif y[i] < -hysteresis:
            new = -1
        else:
            continue
        if state != 0 and new != state:
            # zero lies between last_sign_idx and i; pick the last sign change
            j = last_sign_idx
            for m in range(last_sign_idx, i):
                if np.sign(y[m]) != np.sign(y[m + 1]):
                    j = m
            y0, y1 = y[j], y[j + 1]
            frac = y0 / (y0 - y1) if y0 != y1 else 0.5
            out.append(t[j] + frac * (t[j + 1] - t[j]))
        state = new
        last_sign_idx = i
    return np.asarray(out)


def fit_decay(series: TimeSeries, observable=Observable.N_UP_DEV,
              settings: FitSettings | None = None) -> DecayFit:
    """Fit ``envelope(t) ~ exp(-rate t)`` and count oscillations.

    The plateau is the median of the last ``tail_fraction`` of the samples.
    The envelope is a running maximum over one oscillation period (the
    signal itself when fewer than ``min_crossings`` sign changes are seen).
    The window starts at the first local maximum of the envelope after
    ``t_min`` and ends where the envelope first drops below
    ``plateau_factor * plateau``.  If it never rises above that level the
    whole remaining series is used and the fit is marked partial.
    """
    cfg = settings or FitSettings()
    observable = Observable(observable)
    t = series.times
    y, signed = _signal(series, observable)
    keep = np.isfinite(y)
    if cfg.t_max is not None:
        keep &= t <= cfg.t_max
    t, y, signed = t[keep], y[keep], signed[keep]
    n = len(t)
    if n < 4:
        raise FitWindowError("need at least 4 samples")
    n_tail = max(1, int(math.ceil(cfg.tail_fraction * n)))
    plateau = float(np.median(y[-n_tail:]))
    noise = float(np.median(np.abs(signed[-n_tail:] - np.median(signed[-n_tail:]))))

    # Oscillation period from hysteresis-filtered crossings of the detrended deviation.
    # Only the part of the record that still rises above the floor is used,
    # so noise at the plateau does not register as oscillation.
    centred = signed - np.median(signed[-n_tail:])
    level = cfg.plateau_factor * plateau
    smooth = median_filter(y, size=max(3, int(cfg.smooth_fraction * n)), mode="reflect")
    i0 = int(np.searchsorted(t, cfg.t_min))
    hot = smooth[i0:] > level
    cold = np.flatnonzero(~hot)
    t_hot = t[i0 + cold[0]] if hot.any() and cold.size else t[-1]
    hot = np.flatnonzero(hot)
    sel = (t >= cfg.t_min) & (t <= t_hot)
    # Once the floor is reached, swings smaller than the window threshold are
    # floor fluctuations, not oscillation of the decaying mode.
    hyst = level * max(1.0, noise / plateau) if hot.size and plateau > 0 else 2.0 * noise
    cross = crossing_times(t[sel], centred[sel], hysteresis=hyst)
    period = None
    if len(cross) >= cfg.min_crossings:
        period = 2.0 * (cross[-1] - cross[0]) / (len(cross) - 1)
    if period is not None:
        dt = float(np.median(np.diff(t)))
        size = max(1, int(round(period / dt)))
        env = maximum_filter1d(y, size=size, mode="nearest")
    else:
        env = y

    start = int(np.searchsorted(t, cfg.t_min))
    i = start
    while i + 1 < n and env[i + 1] > env[i]:
        i += 1
    start = i
    above = env[start:] > level
    partial = False
    note = ""
    if not above.any() or not above[0]:
        stop = n
        partial = True
        note = "envelope never exceeds the plateau threshold; fitted over the whole series"
    else:
        below = np.flatnonzero(~above)
        stop = start + (int(below[0]) if below.size else len(above))
    idx = np.arange(start, stop)
    # The floor adds to the envelope rather than multiplying it; removing it
    # keeps the tail of the window from flattening the slope.
    # A slowly decaying oscillation also has a flat-looking tail; only a
    # record that went cold before its tail has really reached a floor.
    reached = t_hot < t[n - n_tail]
    floor = (cfg.subtract_plateau and not partial and reached
             and _is_flat(y[-n_tail:], cfg.floor_flatness))
    vals = env[idx] - plateau if floor else env[idx]
    pos = vals > 0
    n_filtered = int((~pos).sum())
    if n_filtered:
        log.info("dropped %d non-positive envelope samples", n_filtered)
    idx, vals = idx[pos], vals[pos]
    if idx.size < 3:
        raise FitWindowError(f"fit window holds {idx.size} usable samples")
    tw = t[idx]
    ly = np.log(vals)
    slope, icept = np.polyfit(tw, ly, 1)
    pred = slope * tw + icept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if np.ptp(ly) > 0 else 1.0
    rate = float(-slope)
    if abs(rate) * (tw[-1] - tw[0]) < cfg.min_efoldings:
        partial = True

    freq = 0.0
    if period is not None:
        inwin = cross[(cross >= tw[0]) & (cross <= tw[-1])]
        if len(inwin) >= cfg.min_crossings:
            freq = float(math.pi * (len(inwin) - 1) / (inwin[-1] - inwin[0]))
    return DecayFit(rate, freq, (float(tw[0]), float(tw[-1])), max(plateau, 0.0), r2, partial,
                    n_filtered, int(idx.size), observable.value, note)


def _is_flat(tail, tol):
    half = len(tail) // 2
    if half < 2:
        return False
    a, b = np.median(tail[:half]), np.median(tail[half:])
    if a <= 0 or b <= 0:
        return a == b
    # allow for the sampling scatter of a median of ``half`` noisy values
    return abs(math.log(a / b)) < max(tol, 3.0 / math.sqrt(half))


@dataclass(frozen=True)
class ComparisonReport:
    passed: bool
    rate_ok: bool
    freq_ok: bool
    fit_rate: float
    fit_freq: float
    predicted: complex
    rel_tol: float
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["predicted"] = {"re": self.predicted.real, "im": self.predicted.imag}
        return d


def compare_to_spectrum(fit: DecayFit, prediction, rel_tol: float = 0.15,
                        freq_tol: float | None = None) -> ComparisonReport:
    """Check a fit against a predicted eigenvalue.

    The rate must lie within ``rel_tol`` of ``Re lambda``.  A real prediction
    requires a non-oscillatory fit; a complex one requires the fitted angular
    frequency within ``freq_tol`` (default ``rel_tol``) of ``|Im lambda|``.
    """
    lam = complex(getattr(prediction, "lam", prediction))
    freq_tol = rel_tol if freq_tol is None else freq_tol
    rate_ok = abs(fit.rate - lam.real) <= rel_tol * abs(lam.real)
    if abs(lam.imag) <= 1e-9 * max(1.0, abs(lam)):
        freq_ok = fit.freq == 0.0
    else:
        freq_ok = abs(fit.freq - abs(lam.imag)) <= freq_tol * abs(lam.imag)
    return ComparisonReport(rate_ok and freq_ok, rate_ok, freq_ok, fit.rate, fit.freq, lam, rel_tol,
                            {"window": fit.window, "partial": fit.partial, "r2": fit.r2})


def plateau_scaling(plateaus: dict) -> dict:
    """``plateau * sqrt(N)`` per ensemble size and its max/min spread."""
    scaled = {int(n): float(p) * math.sqrt(n) for n, p in plateaus.items()}
    vals = list(scaled.values())
    spread = max(vals) / min(vals) if min(vals) > 0 else math.inf
    return {"scaled": scaled, "spread": spread}
