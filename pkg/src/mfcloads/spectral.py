"""Relaxation spectrum of the linearized mean-field dynamics.

Perturbations around the stationary state decay as ``exp(-lambda t)``.  Two
families of ``lambda`` exist (``beta = r tau / 4``, ``A = r tau + 4``):

* the MINUS branch, which carries mass between the modes and feels the
  feedback,

      r e^{lambda tau/2} / (r - 2 lambda)
          * (4 s r^2 / ((r - lambda)(2 s r + (r - lambda) A)) - 1) = 1;

* the PLUS branch, independent of ``s``,

      r e^{lambda tau/2} / (r - 2 lambda) = 1.

At ``s = 0`` both are solved by ``lambda = (2/tau)(beta - W_k(+-beta e^beta))``.
For ``s > 0`` the MINUS roots are followed by continuation in ``s`` from the
Lambert-W roots.  Clearing denominators gives the entire function

    G(lambda) = r (4 s r^2 - Q) - e^{-lambda tau/2} (r - 2 lambda) Q,
    Q = (r - lambda)(2 s r + (r - lambda) A),

whose zeros are exactly the MINUS roots when ``s > 0``.  At ``s = 0`` it has a
spurious double zero at ``lambda = r``; for ``s > 0`` that zero splits into
two genuine roots, one of which runs down the real axis and becomes the
leading, purely real eigenvalue at strong feedback.  Both are tracked
("pole-born" roots, ``index_k is None``).
"""

from __future__ import annotations

import cmath
import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .lambertw import lambert_w
from .model import ModelParams

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
POLE_GUARD = 1e-6


class Branch(str, enum.Enum):
    MINUS = "-"
    PLUS = "+"


class Regime(str, enum.Enum):
    BASELINE = "BASELINE"
    SLOWER = "SLOWER"
    FASTER = "FASTER"
    SUPER_RELAXATION = "SUPER_RELAXATION"


class ContinuationError(RuntimeError):
    def __init__(self, msg, path=None):
        super().__init__(msg)
        self.path = path or []


class SpuriousRootError(ValueError):
    pass


@dataclass(frozen=True)
class ComplexEigenvalue:
    """One root of a branch equation.

    ``index_k`` is the Lambert-W branch the root descends from at ``s = 0``
    (``None`` for the two pole-born roots).  ``path`` holds the continuation
    history as ``(s, lambda)`` pairs.
    """

    lam: complex
    branch: Branch
    index_k: int | None
    s: float
    residual: float
    origin: str = "lambert"
    path: tuple = field(default=(), repr=False, compare=False)

    @property
    def rate(self) -> float:
        return self.lam.real

    @property
    def is_real(self) -> bool:
        return abs(self.lam.imag) <= 1e-9 * max(1.0, abs(self.lam))

    @property
    def label(self) -> str:
        k = "p" if self.index_k is None else str(self.index_k)
        return f"{k}{self.branch.value}"

    def to_dict(self) -> dict:
        return {"k": self.index_k, "branch": self.branch.value, "s": self.s,
                "re": self.lam.real, "im": self.lam.imag, "residual": self.residual,
                "origin": self.origin}


# --------------------------------------------------------------------------
# characteristic functions


def plus_residual(lam: complex, params: ModelParams) -> float:
    r, tau = params.r, params.tau
    return abs(_exp_times(lam * tau / 2.0, r / (r - 2.0 * lam)) - 1.0)


def minus_residual(lam: complex, params: ModelParams, s: float) -> float:
    """``|LHS - 1|`` of the MINUS equation, evaluated without overflow."""
    r, tau = params.r, params.tau
    A = r * tau + 4.0
    mu = r - lam
    q = mu * (2.0 * s * r + mu * A)
    pref = r * (4.0 * s * r * r - q) / ((r - 2.0 * lam) * q)
    return abs(_exp_times(lam * tau / 2.0, pref) - 1.0)


def _exp_times(x: complex, c: complex) -> complex:
    if c == 0:
        return 0j
    return cmath.exp(x + cmath.log(c))


def _g_minus(lam: complex, r, tau, s):
    """Entire MINUS function and its derivatives in ``lambda`` and ``s``."""
    A = r * tau + 4.0
    mu = r - lam
    d = 2.0 * s * r + mu * A
    q = mu * d
    dq = -2.0 * s * r - 2.0 * mu * A
    qs = 2.0 * r * mu
    e = cmath.exp(-lam * tau / 2.0)
    w = r - 2.0 * lam
    g = r * (4.0 * s * r * r - q) - e * w * q
    dg = -r * dq + e * (0.5 * tau * w * q + 2.0 * q - w * dq)
    gs = 4.0 * r ** 3 - r * qs - e * w * qs
    return g, dg, gs


def _g_minus_vec(lam: np.ndarray, r, tau, s):
    A = r * tau + 4.0
    mu = r - lam
    q = mu * (2.0 * s * r + mu * A)
    if s == 0.0:
        # Divide out the spurious double zero at lambda = r.
        return r + np.exp(-lam * tau / 2.0) * (r - 2.0 * lam)
    return r * (4.0 * s * r * r - q) - np.exp(-lam * tau / 2.0) * (r - 2.0 * lam) * q


def _g0(lam, r, tau):
    e = cmath.exp(-lam * tau / 2.0)
    return r + e * (r - 2.0 * lam), e * (-0.5 * tau * (r - 2.0 * lam) - 2.0)


def _newton(fun, lam, tol=1e-14, maxiter=30):
    for it in range(1, maxiter + 1):
        try:
            g, dg = fun(lam)
        except (OverflowError, ZeroDivisionError):
            return lam, False, it
        if dg == 0:
            return lam, False, it
        step = g / dg
        lam = lam - step
        if not cmath.isfinite(lam):
            return lam, False, it
        if abs(step) <= tol * max(1.0, abs(lam)):
            return lam, True, it
    return lam, False, maxiter


def _g_plus(lam, r, tau):
    e = cmath.exp(-lam * tau / 2.0)
    return r - e * (r - 2.0 * lam), e * (0.5 * tau * (r - 2.0 * lam) + 2.0)


def polish_root(params: ModelParams, lam: complex, branch: Branch, s: float = 0.0) -> complex:
    """Newton-refine an approximate root of either branch equation.

    Raises :class:`ContinuationError` when Newton does not converge.
    """
    r, tau = params.r, params.tau
    if branch is Branch.PLUS:
        fun = lambda z: _g_plus(z, r, tau)  # noqa: E731
    elif s > 0:
        fun = lambda z: _g_minus(z, r, tau, s)[:2]  # noqa: E731
    else:
        fun = lambda z: _g0(z, r, tau)  # noqa: E731
    new, ok, _ = _newton(fun, complex(lam))
    if not ok:
        raise ContinuationError(f"Newton failed from {lam}")
    return new


# --------------------------------------------------------------------------
# s = 0 closed forms


def lambert_root(params: ModelParams, k: int, branch: Branch) -> complex:
    b = params.beta
    if branch is Branch.PLUS and k == 0:
        return 0j
    sign = 1.0 if branch is Branch.PLUS else -1.0
    z = sign * b * math.exp(b)
    if math.isinf(z):
        # Large beta: W_k(+-b e^b) from the log form, avoiding overflow.
        return _lambert_root_large(b, k, sign) * 2.0 / params.tau
    return (b - lambert_w(k, z)) * 2.0 / params.tau


def _lambert_root_large(b, k, sign):
    # Solve w + log(w) = log(z) + 2 pi i k with log z = b + log(b) (+ i pi).
    target = b + math.log(b) + (0j if sign > 0 else 1j * math.pi) + 2j * math.pi * k
    w = target - cmath.log(target)
    for _ in range(50):
        f = w + cmath.log(w) - target
        dw = f / (1.0 + 1.0 / w)
        w -= dw
        if abs(dw) < 1e-15 * abs(w):
            break
    return b - w


def spectrum_s0(params: ModelParams, k_range=(-3, 3)) -> list[ComplexEigenvalue]:
    """Both branches at ``s = 0`` for ``k`` in the inclusive ``k_range``."""
    out = []
    for branch in (Branch.MINUS, Branch.PLUS):
        for k in range(k_range[0], k_range[1] + 1):
            lam = lambert_root(params, k, branch)
            res = plus_residual(lam, params) if branch is Branch.PLUS else minus_residual(lam, params, 0.0)
            _certify(lam, res)
            out.append(ComplexEigenvalue(lam, branch, k, 0.0, res))
    return out


def _certify(lam, res):
    if res >= RESIDUAL_TOL * max(1.0, abs(lam)):
        raise ContinuationError(f"root {lam} fails residual check ({res:.3e})")


# --------------------------------------------------------------------------
# continuation in s


@dataclass
class _Path:
    lam: complex
    s: float
    k: int | None
    origin: str
    history: list
    status: str = "ok"


def _pole_seeds(params: ModelParams, s0: float):
    r, tau = params.r, params.tau
    A = r * tau + 4.0
    mu = 2.0 * r * math.sqrt(s0 / (A * -math.expm1(-r * tau / 2.0)))
    seeds = []
    for sign, name in ((1.0, "pole_lo"), (-1.0, "pole_hi")):
        lam, ok, _ = _newton(lambda z: _g_minus(z, r, tau, s0)[:2], complex(r - sign * mu))
        if ok:
            seeds.append((lam, name))
    return seeds


def continue_root(params: ModelParams, lam: complex, s_from: float, s_to: float,
                  ds0: float = 1.0, ds_min: float = 1e-10, re_max: float | None = None,
                  record_path: bool = True):
    """Follow a MINUS root from ``s_from`` to ``s_to``.

    Tangent predictor, Newton corrector; the step is halved whenever Newton
    fails, lands near a pole, or moves much farther than predicted (a jump
    to another root).  Returns ``(lambda, path, status)`` where ``status`` is
    ``"ok"`` or ``"exited"`` (real part passed ``re_max``).
    """
    r, tau = params.r, params.tau
    path = [(s_from, lam)] if record_path else []
    s = s_from
    direction = 1.0 if s_to >= s_from else -1.0
    ds = ds0
    while direction * (s_to - s) > 0:
        step = min(ds, direction * (s_to - s))
        g, dg, gs = _g_minus(lam, r, tau, s)
        tangent = -gs / dg if dg != 0 else 0j
        pred = lam + tangent * step * direction
        s_new = s + direction * step if step < direction * (s_to - s) else s_to
        fun = (lambda z, sn=s_new: _g_minus(z, r, tau, sn)[:2]) if s_new > 0 else \
              (lambda z: _g0(z, r, tau))
        new, ok, iters = _newton(fun, pred)
        moved = abs(pred - lam)
        ok = ok and abs(new - pred) <= 0.3 * moved + 1e-9 * max(1.0, abs(lam))
        ok = ok and not _near_pole(new, r)
        if not ok:
            ds = step / 2.0
            if ds < ds_min:
                raise ContinuationError(f"continuation stalled at s={s} lambda={lam}", path)
            continue
        lam, s = new, s_new
        if record_path:
            path.append((s, lam))
        if re_max is not None and lam.real > re_max:
            return lam, path, "exited"
        if iters <= 3:
            ds = min(step * 2.0, 50.0)
        elif iters > 6:
            ds = step / 2.0
    return lam, path, "ok"


def _near_pole(lam, r):
    return abs(lam - r) < POLE_GUARD * r or abs(lam - r / 2.0) < POLE_GUARD * r


def spectrum_minus(params: ModelParams, s: float, k_range=(-3, 2), window=None,
                   check_count: bool = True) -> list[ComplexEigenvalue]:
    """MINUS-branch roots at nonlinearity ``s``, ordered by real part.

    Seeds are the ``s = 0`` Lambert roots with ``k`` in ``k_range`` padded by
    three on each side, plus the two pole-born roots.  Roots whose real part
    leaves ``window`` are dropped.  With ``check_count`` the number of roots
    inside the scan rectangle is compared against an argument-principle count;
    missing roots are recovered by a seeded search and reported with
    ``origin="recovered"``.
    """
    if s < 0:
        raise ValueError("s must be >= 0")
    r = params.r
    rect = window or scan_window(params, k_range)
    re_max = rect[1]
    pad = 3
    paths = []
    for k in range(k_range[0] - pad, k_range[1] + pad + 1):
        paths.append(_Path(lambert_root(params, k, Branch.MINUS), 0.0, k, "lambert", []))
    if s > 0:
        s0 = min(s, 1e-6)
        for lam, name in _pole_seeds(params, s0):
            paths.append(_Path(lam, s0, None, name, []))

    tracked = []
    for p in paths:
        try:
            lam, hist, status = continue_root(params, p.lam, p.s, s, re_max=max(3.0 * r, 2.0 * re_max))
        except ContinuationError as exc:
            last = exc.path[-1][1] if exc.path else p.lam
            if last.real <= 2.0 * r:
                log.warning("continuation failed for %s k=%s at %s; relying on recovery",
                            p.origin, p.k, last)
            continue
        if status == "ok":
            tracked.append(ComplexEigenvalue(lam, Branch.MINUS, p.k, s, math.nan, p.origin, tuple(hist)))

    tracked = _dedupe(tracked)
    rect = _adjust_rect(rect, [e.lam for e in tracked], params.tau)
    roots = [e for e in tracked if _inside(e.lam, rect)]
    if check_count:
        roots = _complete(params, s, roots, rect)
    out = []
    for e in roots:
        res = minus_residual(e.lam, params, s)
        _certify(e.lam, res)
        out.append(replace(e, residual=res))
    return sorted(out, key=lambda e: (round(e.lam.real, 12), e.lam.imag))


def _dedupe(roots):
    kept = []
    for e in roots:
        twin = next((o for o in kept if abs(o.lam - e.lam) <= 1e-8 * max(1.0, abs(e.lam))), None)
        if twin is not None:
            log.warning("paths %s and %s converged to the same root %s (branch jump)",
                        twin.label, e.label, e.lam)
            continue
        kept.append(e)
    return kept


def scan_window(params: ModelParams, k_range=(-3, 2)) -> tuple[float, float, float]:
    """``(re_lo, re_hi, im_max)`` of the default counting rectangle."""
    # Above roughly Re(lambda) ~ 20/tau the original equation loses its
    # significant digits (e^{lambda tau/2} amplifies rounding), so roots there
    # cannot be certified; they are tracked but not reported.
    kmax = max(abs(k_range[0]), abs(k_range[1]))
    re_hi = min(3.0 * params.r, 20.0 / params.tau)
    return (-1.0 / params.tau, re_hi, 2.0 * math.pi * (kmax + 1) * 2.0 / params.tau)


def _inside(lam, rect):
    return rect[0] < lam.real < rect[1] and abs(lam.imag) < rect[2]


def _complete(params, s, roots, rect):
    n = count_minus_roots(params, s, rect)
    if n == len(roots):
        return roots
    log.warning("argument principle counts %d roots, continuation found %d; searching", n, len(roots))
    found = _seeded_search(params, s, rect, [e.lam for e in roots])
    roots = roots + [ComplexEigenvalue(lam, Branch.MINUS, None, s, math.nan, "recovered") for lam in found]
    if n != len(roots):
        raise ContinuationError(f"root count mismatch in {rect}: contour {n}, found {len(roots)}")
    return roots


def _adjust_rect(rect, lams, tau):
    # Pull the right and top edges inward, away from known roots, so the
    # contour phase stays resolvable and membership is unambiguous.
    lo, hi, h = rect
    ims = np.array([abs(z.imag) for z in lams] or [np.inf])
    res = np.array([z.real for z in lams] or [np.inf])
    cands = h - (np.pi / tau) * np.arange(16) / 8.0
    h = float(cands[np.argmax([np.min(np.abs(ims - c)) for c in cands])])
    cands = hi * (1.0 - np.arange(16) / 64.0)
    hi = float(cands[np.argmax([np.min(np.abs(res - c)) for c in cands])])
    return lo, hi, h


def _seeded_search(params, s, rect, known):
    r, tau = params.r, params.tau
    lo, hi, h = rect
    found = []
    for re in np.linspace(lo, min(hi, lo + 20.0 / tau + 3.0 * r), 40):
        for im in np.linspace(-h, h, 81):
            lam, ok, _ = _newton(lambda z: _g_minus(z, r, tau, s)[:2] if s > 0 else _g0(z, r, tau),
                                 complex(re, im), maxiter=60)
            if not ok or not _inside(lam, rect) or _near_pole(lam, r):
                continue
            allz = list(known) + found
            if all(abs(lam - z) > 1e-7 * max(1.0, abs(lam)) for z in allz):
                found.append(lam)
    return found


def count_minus_roots(params: ModelParams, s: float, rect) -> int:
    """Number of MINUS roots inside ``rect`` by the argument principle."""
    lo, hi, h = rect
    r, tau = params.r, params.tau
    return winding_number(lambda z: _g_minus_vec(z, r, tau, s),
                          [complex(lo, -h), complex(hi, -h), complex(hi, h), complex(lo, h)])


def winding_number(f, corners, n0=256, max_points=2_000_000) -> int:
    """Winding number of ``f`` around 0 along the closed polygon ``corners``.

    Each edge is refined until consecutive phase increments are below
    ``pi/4``.  Raises if the total is not close to an integer or ``f``
    vanishes on the contour.
    """
    total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        t = np.linspace(0.0, 1.0, n0 + 1)
        vals = f(a + (b - a) * t)
        while True:
            if np.any(vals == 0):
                raise ArithmeticError("function vanishes on the contour")
            dphi = np.angle(vals[1:] / vals[:-1])
            bad = np.abs(dphi) > np.pi / 4
            if not bad.any():
                break
            if t.size > max_points:
                raise ArithmeticError("phase could not be resolved on the contour")
            mids = 0.5 * (t[:-1][bad] + t[1:][bad])
            t_new = np.concatenate([t, mids])
            order = np.argsort(t_new)
            t = t_new[order]
            vals = np.concatenate([vals, f(a + (b - a) * mids)])[order]
        total += dphi.sum()
    w = total / (2.0 * np.pi)
    if abs(w - round(w)) > 0.05:
        raise ArithmeticError(f"non-integer winding number {w}")
    return int(round(w))


def leading_minus(params: ModelParams, s: float, roots=None, k_max: int = 64) -> ComplexEigenvalue:
    """The MINUS root with the smallest real part (the slowest mass mode).

    Without ``roots`` the branch range is widened until the minimum sits
    away from the edge of the scan window and the outermost roots decay
    faster with ``|k|``.  Ties between conjugates resolve to ``Im < 0``.
    """
    def key(e):
        return (round(e.lam.real, 10), e.lam.imag)

    if roots is not None:
        return min(roots, key=key)
    K = 2
    while True:
        roots = spectrum_minus(params, s, (-K, K - 1))
        lead = min(roots, key=key)
        lower = sorted((e for e in roots if e.lam.imag < 0), key=lambda e: e.lam.imag)
        if len(lower) < 3 or K >= k_max:
            return lead
        edge, inner = lower[0], lower[1]
        if abs(lead.lam.imag) < abs(inner.lam.imag) and edge.lam.real > inner.lam.real:
            return lead
        K *= 2


def leading_plus(params: ModelParams) -> ComplexEigenvalue:
    """``lambda_{1;+}``: the slowest non-stationary PLUS mode (``Im < 0``)."""
    lam = lambert_root(params, 1, Branch.PLUS)
    res = plus_residual(lam, params)
    return ComplexEigenvalue(lam, Branch.PLUS, 1, params.s, res)


def large_rtau_shift(params: ModelParams, s: float) -> float:
    """Leading-order shift ``8 s / (r tau^2)`` of the k=0 MINUS root for ``r tau >> 1``."""
    return 8.0 * s / (params.r * params.tau ** 2)


class PoleProximityError(ValueError):
    pass


def small_s_correction(params: ModelParams, k: int = 0, pole_tol: float = 1e-9) -> complex:
    """First-order rate of change ``d lambda_k / ds`` of a MINUS root at ``s = 0``."""
    r, tau = params.r, params.tau
    lam0 = lambert_root(params, k, Branch.MINUS)
    d1 = r - lam0
    d2 = (r - 2.0 * lam0) * tau + 4.0
    if abs(d1) < pole_tol * r or abs(d2) < pole_tol * max(1.0, r * tau):
        raise PoleProximityError(f"s-derivative undefined near lambda={lam0}")
    return 8.0 * r * r * (r - 2.0 * lam0) / (d1 ** 2 * (r * tau + 4.0) * d2)


# --------------------------------------------------------------------------
# eigenvectors


@dataclass
class EigenvectorSolution:
    """Piecewise eigenfunction on the left tail, band and right tail.

    The free coefficients are stored as boundary values: ``b_left`` is the
    homogeneous left piece at ``x_down``, ``b_up``/``b_down`` the band values
    of the ON/OFF components at ``x_down``/``x_up``, ``b_right`` the
    homogeneous right piece at ``x_up``.  ``c_L`` and friends give the same
    coefficients in absolute-``x`` form.  ``n_q`` is the inverse stationary
    band density, the normalization of the mean-field forcing term.
    """

    eigenvalue: ComplexEigenvalue
    params: ModelParams
    s: float
    b_left: complex
    b_up: complex
    b_down: complex
    b_right: complex
    chi_up: complex
    n_q: float
    singular_ratio: float

    @property
    def lam(self):
        return self.eigenvalue.lam

    @property
    def forcing(self) -> complex:
        """Amplitude ``r s chi / (N_q lambda)`` of the particular solution."""
        lam = self.lam
        if lam == 0:
            return 0j
        return self.params.r * self.s * self.chi_up / (self.n_q * lam)

    @property
    def c_L(self):
        p = self.params
        return self.b_left * cmath.exp(-(p.r - self.lam) * p.x_down / p.v)

    @property
    def c_c_up(self):
        p = self.params
        return self.b_up * cmath.exp(self.lam * p.x_down / p.v)

    @property
    def c_c_down(self):
        p = self.params
        return self.b_down * cmath.exp(-self.lam * p.x_up / p.v)

    @property
    def c_R(self):
        p = self.params
        return self.b_right * cmath.exp((p.r - self.lam) * p.x_up / p.v)

    def evaluate(self, x, side=0):
        """``(rho_up, rho_down)`` at ``x``.

        At exactly ``x_down``/``x_up`` the piece is chosen by ``side``
        (-1 left piece, +1 right piece, 0 band).
        """
        p, lam = self.params, self.lam
        x = np.asarray(x, dtype=float)
        r, v = p.r, p.v
        rho1 = r / (r - 2.0 * lam)
        rho2 = (r + lam) / (r - lam) if self.forcing != 0 else 0.0
        P = self.forcing
        up = np.zeros(x.shape, dtype=complex)
        dn = np.zeros(x.shape, dtype=complex)
        left = (x < p.x_down) | ((x == p.x_down) & (side < 0))
        right = (x > p.x_up) | ((x == p.x_up) & (side > 0))
        band = ~(left | right)
        yl = x[left] - p.x_down
        hom = self.b_left * np.exp((r - lam) * yl / v)
        part = P * np.exp(r * yl / v)
        up[left] = hom + part
        dn[left] = rho1 * hom + rho2 * part
        yb = x[band]
        up[band] = self.b_up * np.exp(-lam * (yb - p.x_down) / v)
        dn[band] = self.b_down * np.exp(lam * (yb - p.x_up) / v)
        yr = x[right] - p.x_up
        hom = self.b_right * np.exp(-(r - lam) * yr / v)
        part = P * np.exp(-r * yr / v)
        up[right] = rho1 * hom - rho2 * part
        dn[right] = hom - part
        return up, dn

    def continuity_defect(self) -> float:
        """Largest relative jump of either component across ``x_down``/``x_up``."""
        p = self.params
        worst = 0.0
        for xb in (p.x_down, p.x_up):
            side = -1 if xb == p.x_down else 1
            ua, da = self.evaluate([xb], side=side)
            ub, db = self.evaluate([xb], side=0)
            scale = max(abs(ua[0]), abs(da[0]), abs(ub[0]), abs(db[0]), 1e-300)
            worst = max(worst, abs(ua[0] - ub[0]) / scale, abs(da[0] - db[0]) / scale)
        return worst

    def integral_up(self) -> complex:
        """Closed-form integral of ``rho_up`` over the real line."""
        return _integral_up(self.params, self.lam, self.b_left, self.b_up, self.b_right,
                            self.forcing)


def _band_factor(lam, v, tau):
    # integral of exp(-lam (x - x_down) / v) over the band = v (1 - e^{-lam tau/2}) / lam
    z = lam * tau / 2.0
    if abs(z) < 1e-8:
        return v * tau / 2.0 * (1.0 - z / 2.0)
    return v * -cmath_expm1(-z) / lam


def cmath_expm1(z):
    if abs(z) < 1e-5:
        return z + z * z / 2.0 + z ** 3 / 6.0
    return cmath.exp(z) - 1.0


def _integral_up(params, lam, b_left, b_up, b_right, P):
    r, v, tau = params.r, params.v, params.tau
    rho1 = r / (r - 2.0 * lam)
    total = b_left * v / (r - lam) + b_up * _band_factor(lam, v, tau) + rho1 * b_right * v / (r - lam)
    if P != 0:
        rho2 = (r + lam) / (r - lam)
        total += P * v / r * (1.0 - rho2)
    return total


def eigenvector(ev: ComplexEigenvalue, params: ModelParams, s: float | None = None,
                singular_tol: float = 1e-8) -> EigenvectorSolution:
    """Solve continuity at both band edges plus self-consistency for the eigenfunction.

    Raises :class:`SpuriousRootError` when the linear system is not singular
    (``lambda`` is not an eigenvalue) and :class:`PoleProximityError` near
    ``lambda in {r/2, r}`` or for non-decaying tails (``Re lambda >= r``).
    """
    s = ev.s if s is None else s
    lam = complex(ev.lam)
    r, v, tau = params.r, params.v, params.tau
    if abs(lam - r / 2.0) < POLE_GUARD * r or lam.real >= r * (1 - POLE_GUARD):
        raise PoleProximityError(f"lambda={lam} is at a pole or has non-decaying tails")
    n_q = v * (r * tau + 4.0) / r
    rho1 = r / (r - 2.0 * lam)
    E = cmath.exp(-lam * tau / 2.0)
    if ev.branch is Branch.PLUS:
        # chi = 0: continuity alone; unknowns (b_left, b_up, b_down, b_right)
        M = np.array([
            [1.0, -1.0, 0.0, 0.0],
            [rho1, 0.0, -E, 0.0],
            [0.0, E, 0.0, -rho1],
            [0.0, 0.0, 1.0, -1.0],
        ], dtype=complex)
        vec, ratio = _null_vector(M)
        vec = np.append(vec, 0.0)
    else:
        if lam == 0:
            raise PoleProximityError("lambda = 0 is not a MINUS eigenvalue")
        f = r * s / (n_q * lam)        # forcing amplitude per unit chi
        rho2 = (r + lam) / (r - lam)
        band = _band_factor(lam, v, tau)
        M = np.array([
            [1.0, -1.0, 0.0, 0.0, f],
            [rho1, 0.0, -E, 0.0, f * rho2],
            [0.0, E, 0.0, -rho1, f * rho2],
            [0.0, 0.0, 1.0, -1.0, f],
            [v / (r - lam), band, 0.0, rho1 * v / (r - lam), f * v / r * (1.0 - rho2) - 1.0],
        ], dtype=complex)
        vec, ratio = _null_vector(M)
    if ratio > singular_tol:
        raise SpuriousRootError(f"continuity system is regular at lambda={lam} "
                                f"(sigma_min/sigma_max={ratio:.3e})")
    vec = vec / vec[np.argmax(np.abs(vec))]
    return EigenvectorSolution(ev, params, s, complex(vec[0]), complex(vec[1]),
                               complex(vec[2]), complex(vec[3]), complex(vec[4]), n_q, ratio)


def _null_vector(M):
    # Equilibrate rows so the singular-value ratio is scale independent.
    scale = np.abs(M).max(axis=1)
    scale[scale == 0] = 1.0
    Ms = M / scale[:, None]
    _, sv, vh = np.linalg.svd(Ms)
    return vh[-1].conj(), sv[-1] / sv[0]


# --------------------------------------------------------------------------
# regimes


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    lambda0: ComplexEigenvalue
    lambda0_s0: complex
    lambda1_plus: complex
    lambda0_real: bool
    transition_discontinuous: bool | None

    def to_dict(self):
        return {"regime": self.regime.value, "lambda0": self.lambda0.lam,
                "lambda0_s0": self.lambda0_s0, "lambda1_plus": self.lambda1_plus,
                "lambda0_real": self.lambda0_real,
                "transition_discontinuous": self.transition_discontinuous}


def classify_regime(params: ModelParams, s: float, detect_transition: bool = False,
                    r_bounds=(0.5, 2000.0)) -> RegimeReport:
    """Compare the leading MINUS rate at ``s`` with its ``s = 0`` value and ``Re lambda_{1;+}``.

    With ``detect_transition`` the real/complex switch of the leading root is
    located along ``r`` (at fixed ``tau``) and reported as discontinuous when
    the leading root jumps across it.
    """
    lead = leading_minus(params, s)
    lead0 = leading_minus(params, 0.0)
    plus = leading_plus(params).lam
    if s == 0 or math.isclose(lead.lam.real, lead0.lam.real, rel_tol=1e-12):
        regime = Regime.BASELINE
    elif lead.lam.real > plus.real:
        regime = Regime.SUPER_RELAXATION
    elif lead.lam.real > lead0.lam.real:
        regime = Regime.FASTER
    else:
        regime = Regime.SLOWER
    jump = None
    if detect_transition:
        jump = real_complex_transition(params, s, r_bounds)["discontinuous"]
    return RegimeReport(regime, lead, lead0.lam, plus, lead.is_real, jump)


def real_complex_transition(params: ModelParams, s: float, r_bounds=(0.5, 2000.0),
                            n_scan: int = 48, rel_width: float = 1e-7) -> dict:
    """Locate the ``r`` where the leading MINUS root turns from real to complex.

    Bisects on ``r`` until the bracket is ``rel_width`` wide and compares the
    leading roots at the two ends: a continuous transition (two real roots
    merging) leaves a gap that shrinks with the bracket; a jump leaves an
    ``O(1)`` gap.
    """
    def lead(r):
        return leading_minus(params.with_(r=float(r), s=s), s).lam

    def is_complex(z):
        return abs(z.imag) > 1e-9 * max(1.0, abs(z))

    grid = np.geomspace(*r_bounds, n_scan)
    flags = [is_complex(lead(r)) for r in grid]
    idx = next((i for i in range(len(grid) - 1) if flags[i] != flags[i + 1]), None)
    if idx is None:
        return {"r_star": None, "gap": None, "discontinuous": None}
    lo, hi = grid[idx], grid[idx + 1]
    f_lo = flags[idx]
    while (hi - lo) > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if is_complex(lead(mid)) == f_lo:
            lo = mid
        else:
            hi = mid
    a, b = lead(lo), lead(hi)
    gap = abs(a - b)
    # Square-root merging gives gap ~ sqrt(width); anything far above is a jump.
    scale = max(1.0, abs(a))
    return {"r_star": float(0.5 * (lo + hi)), "gap": gap, "discontinuous": gap > 1e-2 * scale,
            "below": a, "above": b}


# --------------------------------------------------------------------------
# export


SPECTRUM_COLUMNS = ["k", "branch", "s", "re", "im", "residual", "origin"]


def spectrum_rows(roots):
    return [[e.index_k, e.branch.value, e.s, e.lam.real, e.lam.imag, e.residual, e.origin]
            for e in roots]


def write_spectrum(path, roots, params: ModelParams, fmt="csv"):
    from .io import metadata_lines, write_csv, write_json

    if fmt == "json":
        return write_json(path, {"params": params.to_dict(), "roots": list(roots)})
    return write_csv(path, SPECTRUM_COLUMNS, spectrum_rows(roots),
                     metadata_lines({"params": params.to_dict()}))


REGIME_COLUMNS = ["r", "s", "regime", "re_lambda0", "im_lambda0", "re_lambda0_s0",
                  "re_lambda1_plus", "lambda0_real"]


def regime_grid(params: ModelParams, r_values, s_values):
    """Classify every ``(r, s)`` pair at fixed ``tau`` and band; one row per pair."""
    rows = []
    for r in r_values:
        for s in s_values:
            rep = classify_regime(params.with_(r=float(r), s=float(s)), float(s))
            lam = rep.lambda0.lam
            rows.append([float(r), float(s), rep.regime.value, lam.real, lam.imag,
                         rep.lambda0_s0.real, rep.lambda1_plus.real, rep.lambda0_real])
    return rows
