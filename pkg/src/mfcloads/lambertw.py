"""Multi-branch complex Lambert W via Halley iteration.

Branch conventions follow the usual ones (Corless et al. 1996): branch ``k``
has ``Im w`` roughly in ``((2k - 1) pi, (2k + 1) pi]``; on the negative real
axis ``z`` is taken from above (``Im z = +0``) so that ``W_0`` and ``W_-1``
are real on ``[-1/e, 0)``.
"""

from __future__ import annotations

import cmath
import math

_INV_E = math.exp(-1.0)
_EPS = 2.220446049250313e-16


class LambertWError(ArithmeticError):
    """Halley iteration did not converge; carries the last iterate."""

    def __init__(self, k, z, w, err):
        super().__init__(f"W_{k}({z}) did not converge: last w={w}, |w e^w - z|={err:.3e}")
        self.k, self.z, self.w, self.err = k, z, w, err


def _initial(k: int, z: complex) -> complex:
    if abs(z + _INV_E) < 0.3 and (k == 0 or (k == -1 and z.imag >= 0) or (k == 1 and z.imag < 0)):
        p = cmath.sqrt(2.0 * (math.e * z + 1.0))
        if k != 0:
            p = -p
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    if k == 0 and -1.0 < z.real < 1.5 and abs(z.imag) < 1.0 and -2.5 * abs(z.imag) - 0.2 < z.real:
        # [2/2] Pade approximant of W_0(z)/z about z = 0.
        return z * (1.0 + 1.9 * z + 0.28333333333333333 * z * z) / (1.0 + 2.9 * z + 1.6833333333333333 * z * z)
    l1 = cmath.log(z) + 2j * math.pi * k
    if l1 == 0:
        return complex(-1.0)
    l2 = cmath.log(l1)
    return l1 - l2 + l2 / l1


def lambert_w(k: int, z, tol: float = 1e-15, maxiter: int = 100) -> complex:
    """Return ``w`` on branch ``k`` with ``w * exp(w) == z``.

    Raises :class:`LambertWError` if the iteration cap is reached.
    """
    k = int(k)
    z = complex(z)
    if z.imag == 0.0:
        z = complex(z.real, 0.0)  # -0.0 imaginary part would select the lower side of the cut
    if z == 0:
        if k == 0:
            return 0j
        raise ValueError("W_k(0) is -infinity for k != 0")
    if k in (0, -1) and z == -_INV_E:
        return complex(-1.0)
    w = _initial(k, z)
    for _ in range(maxiter):
        ew = cmath.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if wp1 == 0:
            wp1 = 1e-300
        if abs(f) <= 4.0 * _EPS * max(1.0, abs(z)):
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= tol * (1.0 + abs(w)):
            break
    else:
        raise LambertWError(k, z, w, abs(w * cmath.exp(w) - z))
    return w
