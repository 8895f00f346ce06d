"""Monte Carlo simulation of N identical loads under mean-field feedback.

One step of length ``dt``:

1. the aggregator broadcasts ``n_up`` measured at the end of the previous step;
2. every device moves by ``-v dt`` (ON) or ``+v dt`` (OFF);
3. an ON device below the band switches off with probability
   ``1 - exp(-g(n_up) dt)``, an OFF device above the band switches on with
   probability ``1 - exp(-g(1 - n_up) dt)``.

Random numbers come from a stateless counter-based generator: the uniform used
by device ``i`` at step ``k`` is a hash of ``(seed, k, i)``.  Results are
therefore identical for any number of worker threads.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass, field

import numba as nb
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    nb.config.THREADING_LAYER = "workqueue"

from .density import DensityField, DensityGrid, h1_metric, stationary_field
from .model import FeedbackLaw, ModelParams
from .pde import IC_INTERVALS, band_interval
from .series import TimeSeries
from .steady import StationaryProfile, stationary_profile

log = logging.getLogger(__name__)

MAX_FLIP_PROB = 0.2

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@nb.njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always")
def _step_key(key, step):
    return _mix64(key + (np.uint64(step) + _ONE) * _GOLDEN)


@nb.njit(inline="always")
def _uniform(step_key, i):
    h = _mix64(step_key + (np.uint64(i) + _ONE) * _GOLDEN)
    return np.float64(h >> _S11) * _TO_UNIT


@nb.njit(cache=True)
def counter_uniforms(key, step, idx):
    """Uniforms on ``[0, 1)`` for devices ``idx`` at ``step`` (exposed for testing)."""
    out = np.empty(idx.size)
    sk = _step_key(np.uint64(key), step)
    for j in range(idx.size):
        out[j] = _uniform(sk, idx[j])
    return out


@nb.njit(inline="always")
def _rate(frac, r, expo):
    if expo == 0.0:
        return r
    return r * (2.0 * frac) ** expo


@nb.njit(parallel=True, cache=True, nogil=True)
def _advance(x, on, n_on, n_steps, step0, key, v, dt, x_down, x_up, r, expo, broadcast):
    n = x.size
    shift = v * dt
    for k in range(n_steps):
        frac = n_on / n if broadcast else 0.5
        a = _rate(frac, r, expo)
        b = _rate(1.0 - frac, r, expo)
        pa = -math.expm1(-a * dt)
        pb = -math.expm1(-b * dt)
        sk = _step_key(key, step0 + k)
        cnt = 0
        for i in nb.prange(n):
            if on[i]:
                xi = x[i] - shift
                x[i] = xi
                if xi < x_down and pa > 0.0:
                    if pa >= 1.0 or _uniform(sk, i) < pa:
                        on[i] = 0
            else:
                xi = x[i] + shift
                x[i] = xi
                if xi > x_up and pb > 0.0:
                    if pb >= 1.0 or _uniform(sk, i) < pb:
                        on[i] = 1
            cnt += on[i]
        n_on = cnt
    return n_on


@nb.njit(cache=True)
def _observe(x, on, x_down, x_up):
    n_out = 0
    n_out_on = 0
    finite = True
    for i in range(x.size):
        xi = x[i]
        if not np.isfinite(xi):
            finite = False
        if xi < x_down or xi > x_up:
            n_out += 1
            n_out_on += on[i]
    return n_out, n_out_on, finite


@nb.njit(cache=True)
def _histogram(x, on, x_min, dx, nbins):
    counts = np.zeros((2, nbins), dtype=np.int64)
    clamped = 0
    for i in range(x.size):
        j = int(math.floor((x[i] - x_min) / dx))
        if j < 0:
            j = 0
            clamped += 1
        elif j >= nbins:
            j = nbins - 1
            clamped += 1
        counts[on[i], j] += 1
    return counts, clamped


class ICKind(str, enum.Enum):
    UNIFORM_BAND_ALL_ON = "UNIFORM_BAND_ALL_ON"
    IC1 = "IC1"
    IC2 = "IC2"
    IC3 = "IC3"
    STATIONARY = "STATIONARY"
    CUSTOM = "CUSTOM"


@dataclass(frozen=True)
class InitialCondition:
    """How devices are placed at ``t = 0``.

    IC intervals are band-normalized (``[-1, 1]`` is the band).  ``CUSTOM``
    takes ``custom_spec`` entries ``(lo, hi, mode, weight)`` in absolute
    temperature units.  ``STATIONARY`` places devices at stratified quantiles
    of the analytic stationary profile.
    """

    kind: ICKind = ICKind.UNIFORM_BAND_ALL_ON
    custom_spec: tuple = ()

    def __post_init__(self):
        if not isinstance(self.kind, ICKind):
            object.__setattr__(self, "kind", ICKind(str(self.kind).upper()))
        if self.kind is ICKind.CUSTOM and not self.custom_spec:
            raise ValueError("CUSTOM initial condition needs custom_spec")
        for entry in self.custom_spec:
            lo, hi, mode, weight = entry
            if not lo <= hi or weight < 0:
                raise ValueError(f"bad custom_spec entry {entry!r}")

    def to_dict(self):
        return {"kind": self.kind.value, "custom_spec": [list(e) for e in self.custom_spec]}


@dataclass(frozen=True)
class SimConfig:
    n_devices: int
    t_end: float
    seed: int = 0
    dt: float | None = None
    sample_every: int = 10
    initial_condition: InitialCondition = field(default_factory=InitialCondition)
    histogram_bins: int = 56
    h1_every: int = 0
    h1_scale: float = 1.0
    broadcast: bool = True
    jobs: int | None = None

    def __post_init__(self):
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.t_end < 0:
            raise ValueError("t_end must be >= 0")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def to_dict(self):
        d = {k: getattr(self, k) for k in ("n_devices", "t_end", "seed", "dt", "sample_every",
                                           "histogram_bins", "h1_every", "h1_scale", "broadcast")}
        d["initial_condition"] = self.initial_condition.to_dict()
        return d


def resolve_dt(params: ModelParams, dt: float | None = None) -> float:
    """Validate ``dt`` or pick the default ``tau / 1000``.

    The default is reduced until the flip probability at the stationary rate
    ``r`` is at most ``MAX_FLIP_PROB``.  Far from stationarity ``g`` may be
    unbounded (``s`` large); the exact flip law keeps probabilities valid there.
    """
    if dt is None:
        dt = params.tau / 1000.0
        while -math.expm1(-params.r * dt) > MAX_FLIP_PROB:
            dt /= 2.0
    if dt > params.tau / 100.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds tau/100={params.tau / 100}")
    return dt


def histogram_grid(params: ModelParams, bins: int) -> DensityGrid:
    """Histogram grid spanning ten tail lengths on either side of the band."""
    ell = params.v / params.r
    return DensityGrid(params.x_down - 10 * ell, params.x_up + 10 * ell, bins)


def _stratified(lo, hi, n):
    return lo + (hi - lo) * (np.arange(n) + 0.5) / n


def stationary_quantiles(profile: StationaryProfile, u) -> np.ndarray:
    """Inverse CDF of one mode of the stationary profile at probabilities ``u``."""
    p = profile.params
    c, ell = profile.c_band, p.v / p.r
    q = 0.5 * np.asarray(u, dtype=float)  # per-mode mass is 1/2
    tail, band = c * ell, c * p.band_width
    x = np.empty_like(q)
    left = q < tail
    mid = (~left) & (q < tail + band)
    right = ~(left | mid)
    x[left] = p.x_down + ell * np.log(q[left] / tail)
    x[mid] = p.x_down + (q[mid] - tail) / c
    x[right] = p.x_up - ell * np.log1p(-(q[right] - tail - band) / tail)
    return x


def initial_devices(ic: InitialCondition, params: ModelParams, n: int):
    """Stratified initial placement; returns ``(x, on)`` arrays."""
    if ic.kind in (ICKind.UNIFORM_BAND_ALL_ON, ICKind.IC1, ICKind.IC2, ICKind.IC3):
        lo, hi = band_interval(params, *IC_INTERVALS[ic.kind.value])
        return _stratified(lo, hi, n), np.ones(n, dtype=np.uint8)
    if ic.kind is ICKind.STATIONARY:
        n_on = n // 2
        prof = stationary_profile(params)
        x = np.concatenate([stationary_quantiles(prof, _stratified(0, 1, n_on)),
                            stationary_quantiles(prof, _stratified(0, 1, n - n_on))])
        on = np.concatenate([np.ones(n_on, np.uint8), np.zeros(n - n_on, np.uint8)])
        return x, on
    weights = np.array([e[3] for e in ic.custom_spec], dtype=float)
    counts = _largest_remainder(weights / weights.sum(), n)
    xs, ons = [], []
    for (lo, hi, mode, _), m in zip(ic.custom_spec, counts):
        xs.append(_stratified(lo, hi, m) if hi > lo else np.full(m, float(lo)))
        on = 1 if str(mode).upper() in ("ON", "1", "UP") else 0
        ons.append(np.full(m, on, dtype=np.uint8))
    return np.concatenate(xs), np.concatenate(ons)


def _largest_remainder(frac, n):
    raw = frac * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


class Ensemble:
    """Device arrays plus the step counter; owned by one simulation."""

    def __init__(self, params: ModelParams, law: FeedbackLaw, x, on, seed=0, dt=None,
                 broadcast=True):
        self.params = params
        self.law = law
        self.x = np.array(x, dtype=np.float64, order="C")  # copies: the kernels update in place
        self.on = np.array(on, dtype=np.uint8, order="C")
        if self.x.shape != self.on.shape or self.x.ndim != 1:
            raise ValueError("x and on must be 1-d arrays of equal length")
        self.dt = resolve_dt(params, dt)
        self.key = np.uint64(seed)
        self.step = 0
        self.broadcast = broadcast
        self.n_on = int(self.on.sum())

    @classmethod
    def from_config(cls, params, law, cfg: SimConfig):
        x, on = initial_devices(cfg.initial_condition, params, cfg.n_devices)
        return cls(params, law, x, on, seed=cfg.seed, dt=cfg.dt, broadcast=cfg.broadcast)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def time(self) -> float:
        return self.step * self.dt

    @property
    def n_up(self) -> float:
        return self.n_on / self.n

    def advance(self, n_steps: int):
        p = self.params
        self.n_on = int(_advance(self.x, self.on, self.n_on, n_steps, self.step, self.key,
                                 p.v, self.dt, p.x_down, p.x_up, self.law.r,
                                 float(self.law.exponent), self.broadcast))
        self.step += n_steps

    def observe(self) -> tuple[float, float, float]:
        """``(n_up, n_out, n_out_on)``; raises if any temperature is non-finite."""
        n_out, n_out_on, finite = _observe(self.x, self.on, self.params.x_down, self.params.x_up)
        if not finite:
            raise FloatingPointError(f"non-finite temperature at step {self.step}")
        return self.n_on / self.n, n_out / self.n, n_out_on / self.n

    def density(self, grid: DensityGrid) -> DensityField:
        counts, clamped = _histogram(self.x, self.on, grid.x_min, grid.dx, grid.n_cells)
        scale = 1.0 / (self.n * grid.dx)
        return DensityField(grid, counts[1] * scale, counts[0] * scale, clamped=int(clamped))

    def snapshot(self):
        return self.x.copy(), self.on.copy()


def simulate(params: ModelParams, law: FeedbackLaw, cfg: SimConfig) -> TimeSeries:
    """Run the ensemble to ``cfg.t_end`` and return the sampled observables.

    ``H1`` is computed every ``cfg.h1_every`` samples (never when 0) from a
    histogram with ``cfg.histogram_bins`` bins against the exact stationary
    bin masses.  The final device arrays are attached as ``ts.final_state``.
    """
    if cfg.jobs:
        nb.set_num_threads(min(cfg.jobs, nb.config.NUMBA_NUM_THREADS))
    ens = Ensemble.from_config(params, law, cfg)
    n_steps = int(round(cfg.t_end / ens.dt))
    grid = histogram_grid(params, cfg.histogram_bins)
    st = stationary_field(stationary_profile(params), grid) if cfg.h1_every else None

    n_samples = n_steps // cfg.sample_every + 1
    times = np.empty(n_samples)
    n_up = np.empty(n_samples)
    n_out = np.empty(n_samples)
    n_out_on = np.empty(n_samples)
    h1 = np.full(n_samples, np.nan) if cfg.h1_every else None
    clamped_max = 0
    for j in range(n_samples):
        if j:
            ens.advance(cfg.sample_every)
        times[j] = ens.time
        n_up[j], n_out[j], n_out_on[j] = ens.observe()
        if h1 is not None and j % cfg.h1_every == 0:
            emp = ens.density(grid)
            clamped_max = max(clamped_max, emp.clamped)
            h1[j] = h1_metric(emp, st, cfg.h1_scale)
    if clamped_max:
        log.warning("up to %d devices fell outside the histogram grid", clamped_max)
    meta = {
        "solver": "ensemble",
        "params": params.to_dict(),
        "law": {"r": law.r, "s": law.s, "form": law.form.value},
        "config": cfg.to_dict(),
        "dt": ens.dt,
        "histogram_clamped_max": clamped_max,
    }
    ts = TimeSeries(times, n_up, n_out, h1=h1, n_out_on=n_out_on, meta=meta)
    ts.final_state = ens.snapshot()
    return ts
