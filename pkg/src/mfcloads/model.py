"""Model parameters, the mean-field feedback law and single-device primitives.

A device is a point ``(x, sigma)``: temperature ``x`` and mode ``sigma``.
ON devices cool at rate ``v``, OFF devices warm at rate ``v``.  Inside the
comfort band ``[x_down, x_up]`` a device never switches; below the band an ON
device switches off with rate ``g(n_up)``, above the band an OFF device
switches on with rate ``g(1 - n_up)``, where ``n_up`` is the broadcast
fraction of devices that are ON.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field


class Mode(enum.IntEnum):
    OFF = 0
    ON = 1


class GForm(str, enum.Enum):
    """Functional form of the feedback law.

    ``COMPUTATIONAL`` is ``r (2n)^(s/2)``; its derivative at ``n = 1/2`` is
    ``r s``, which is the coupling that appears in the linearized spectrum.
    ``FULL_EXPONENT`` is ``r (2n)^s`` (derivative ``2 r s``).
    """

    COMPUTATIONAL = "computational"
    FULL_EXPONENT = "full_exponent"


@dataclass(frozen=True)
class ModelParams:
    """Physical and control parameters of a homogeneous ensemble.

    ``tau`` is the bang-bang cycling period ``2 (x_up - x_down) / v`` and is
    always derived, never passed in.
    """

    v: float
    x_down: float
    x_up: float
    r: float
    s: float = 0.0
    tau: float = field(init=False)

    def __post_init__(self):
        for name in ("v", "x_down", "x_up", "r", "s"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not self.x_down < self.x_up:
            raise ValueError(f"x_down ({self.x_down}) must be < x_up ({self.x_up})")
        if self.v <= 0:
            raise ValueError(f"v must be > 0, got {self.v}")
        if self.r <= 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        object.__setattr__(self, "tau", 2.0 * (self.x_up - self.x_down) / self.v)

    @classmethod
    def from_tau(cls, tau, r, s=0.0, x_down=-1.0, x_up=1.0):
        """Build parameters from the cycling period and the band; solves for ``v``."""
        if tau <= 0:
            raise ValueError(f"tau must be > 0, got {tau}")
        return cls(v=2.0 * (x_up - x_down) / tau, x_down=x_down, x_up=x_up, r=r, s=s)

    @property
    def band_width(self) -> float:
        return self.x_up - self.x_down

    @property
    def beta(self) -> float:
        """``r tau / 4``, the argument scale of the s=0 Lambert-W spectrum."""
        return self.r * self.tau / 4.0

    def with_(self, **changes) -> "ModelParams":
        d = {k: getattr(self, k) for k in ("v", "x_down", "x_up", "r", "s")}
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        return {"v": self.v, "x_down": self.x_down, "x_up": self.x_up,
                "r": self.r, "s": self.s, "tau": self.tau}


@dataclass(frozen=True)
class DeviceState:
    x: float
    sigma: Mode

    def __post_init__(self):
        if not math.isfinite(self.x):
            raise ValueError(f"temperature must be finite, got {self.x!r}")
        object.__setattr__(self, "sigma", Mode(self.sigma))


@dataclass(frozen=True)
class FeedbackLaw:
    r: float
    s: float
    form: GForm = GForm.COMPUTATIONAL

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        object.__setattr__(self, "form", GForm(self.form))

    @classmethod
    def from_params(cls, params: ModelParams, form=GForm.COMPUTATIONAL) -> "FeedbackLaw":
        return cls(r=params.r, s=params.s, form=form)

    @property
    def exponent(self) -> float:
        """Power applied to ``2n``."""
        return self.s / 2.0 if self.form is GForm.COMPUTATIONAL else self.s

    def __call__(self, n):
        return feedback_g(n, self)


def drift(state: DeviceState, params: ModelParams) -> float:
    """Temperature rate of a device: ``-v`` when ON, ``+v`` when OFF."""
    return -params.v if state.sigma == Mode.ON else params.v


def feedback_g(n: float, law: FeedbackLaw) -> float:
    """Switching rate ``g(n)`` for a broadcast fraction ``n`` in ``[0, 1]``.

    ``g(1/2) == r`` for both forms and ``g == r`` identically when ``s == 0``.
    At ``n == 0`` the value is the limit of the formula (0 for ``s > 0``).
    """
    if not 0.0 <= n <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {n!r}")
    if law.s == 0.0:
        return law.r
    try:
        value = law.r * (2.0 * n) ** law.exponent
    except OverflowError:
        value = math.inf
    if value < 0:
        raise ValueError(f"negative rate {value} from feedback law")
    return value


def switching_rates(state: DeviceState, n_up: float, params: ModelParams,
                    law: FeedbackLaw) -> tuple[float, float]:
    """Return ``(rate_on_to_off, rate_off_to_on)`` seen by a device at ``state.x``."""
    if not 0.0 <= n_up <= 1.0:
        raise ValueError(f"n_up must lie in [0, 1], got {n_up!r}")
    on_to_off = feedback_g(n_up, law) if state.x < params.x_down else 0.0
    off_to_on = feedback_g(1.0 - n_up, law) if state.x > params.x_up else 0.0
    return on_to_off, off_to_on
