"""Grids and two-component densities ``(p_up, p_down)`` on them."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import DeviceState, Mode, ModelParams
from .steady import StationaryProfile, cell_masses

log = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-12


@dataclass(frozen=True)
class DensityGrid:
    x_min: float
    x_max: float
    n_cells: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min ({self.x_min}) must be < x_max ({self.x_max})")
        if self.n_cells < 1:
            raise ValueError(f"n_cells must be >= 1, got {self.n_cells}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.n_cells) + 0.5)

    @classmethod
    def aligned(cls, params: ModelParams, cells_per_band=400, margin=None):
        """Grid with ``x_down`` and ``x_up`` on cell edges.

        ``margin`` is the width added on each side of the band; the default
        is ``max(20 v / r, band / 2)``.  Transients at strong nonlinearity
        carry mass well beyond the stationary tails, hence the generous
        default.
        """
        dx = params.band_width / cells_per_band
        if margin is None:
            margin = max(20.0 * params.v / params.r, 0.5 * params.band_width)
        m = int(math.ceil(margin / dx - 1e-9))
        return cls(params.x_down - m * dx, params.x_up + m * dx, cells_per_band + 2 * m)

    def band_index(self, params: ModelParams) -> tuple[int, int]:
        """Index range ``[lo, hi)`` of the cells inside the band.

        Raises if the band edges are not cell edges.
        """
        lo = (params.x_down - self.x_min) / self.dx
        hi = (params.x_up - self.x_min) / self.dx
        ilo, ihi = int(round(lo)), int(round(hi))
        if abs(lo - ilo) > 1e-6 or abs(hi - ihi) > 1e-6:
            raise ValueError("band edges must coincide with cell edges")
        return ilo, ihi

    def check_resolves(self, params: ModelParams, tails=5.0):
        """Raise unless the grid resolves the band and ``tails`` decay lengths."""
        ell = params.v / params.r
        if not (self.x_min < params.x_down - tails * ell and self.x_max > params.x_up + tails * ell):
            raise ValueError(f"grid [{self.x_min}, {self.x_max}] does not cover "
                             f"{tails} decay lengths ({ell}) outside the band")
        if self.dx > params.band_width / 100 * (1 + 1e-12):
            raise ValueError(f"dx={self.dx} exceeds band/100")

    def padded(self, m: int) -> "DensityGrid":
        """Same spacing with ``m`` extra cells on each side."""
        dx = self.dx
        return DensityGrid(self.x_min - m * dx, self.x_max + m * dx, self.n_cells + 2 * m)

    def same_as(self, other: "DensityGrid") -> bool:
        return (self.n_cells == other.n_cells
                and math.isclose(self.x_min, other.x_min, rel_tol=0, abs_tol=1e-12)
                and math.isclose(self.x_max, other.x_max, rel_tol=0, abs_tol=1e-12))


@dataclass
class DensityField:
    """Cell-averaged densities; ``sum((p_up + p_down) * dx)`` is the total mass."""

    grid: DensityGrid
    p_up: np.ndarray
    p_down: np.ndarray
    clamped: int = 0

    def __post_init__(self):
        self.p_up = np.asarray(self.p_up, dtype=float)
        self.p_down = np.asarray(self.p_down, dtype=float)
        shape = (self.grid.n_cells,)
        if self.p_up.shape != shape or self.p_down.shape != shape:
            raise ValueError(f"density arrays must have shape {shape}")

    @property
    def mass(self) -> float:
        return float((self.p_up.sum() + self.p_down.sum()) * self.grid.dx)

    @property
    def n_up(self) -> float:
        return float(self.p_up.sum() * self.grid.dx)

    def n_out(self, params: ModelParams, on_only=False) -> float:
        lo, hi = self.grid.band_index(params)
        out = self.p_up[:lo].sum() + self.p_up[hi:].sum()
        if not on_only:
            out += self.p_down[:lo].sum() + self.p_down[hi:].sum()
        return float(out * self.grid.dx)

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.p_up.copy(), self.p_down.copy(), self.clamped)

    def clip_negative(self, tol=NEGATIVE_TOL):
        """Zero out round-off negatives; raise if any value is below ``-tol``."""
        worst = min(self.p_up.min(), self.p_down.min())
        if worst < -tol:
            raise FloatingPointError(f"negative density {worst:.3e} beyond tolerance")
        np.maximum(self.p_up, 0.0, out=self.p_up)
        np.maximum(self.p_down, 0.0, out=self.p_down)
        return self

    def edge_mass(self, cells: int = 1) -> float:
        """Mass held by the ``cells`` outermost cells on each side (both modes)."""
        p = self.p_up + self.p_down
        return float((p[:cells].sum() + p[-cells:].sum()) * self.grid.dx)

    def padded(self, m: int) -> "DensityField":
        """Copy on a grid extended by ``m`` empty cells on each side."""
        pad = np.zeros(m)
        return DensityField(self.grid.padded(m), np.concatenate([pad, self.p_up, pad]),
                            np.concatenate([pad, self.p_down, pad]), self.clamped)


def stationary_field(profile: StationaryProfile, grid: DensityGrid) -> DensityField:
    """Cell averages of the analytic stationary profile."""
    m = cell_masses(profile, grid.edges) / grid.dx
    return DensityField(grid, m, m.copy())


def uniform_field(grid: DensityGrid, lo: float, hi: float, mode=Mode.ON) -> DensityField:
    """All mass in one mode, spread uniformly over ``[lo, hi]`` (cell-overlap exact)."""
    if not lo < hi:
        raise ValueError("empty interval")
    e = grid.edges
    overlap = np.clip(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0, None)
    dens = overlap / (hi - lo) / grid.dx
    zero = np.zeros(grid.n_cells)
    if Mode(mode) == Mode.ON:
        return DensityField(grid, dens, zero)
    return DensityField(grid, zero, dens)


def empirical_density(snapshot, grid: DensityGrid) -> DensityField:
    """Normalized two-mode histogram of a device snapshot.

    ``snapshot`` is either a sequence of :class:`DeviceState` or a pair of
    arrays ``(x, sigma)`` with ``sigma`` 1 for ON.  Devices outside the grid
    are counted in the nearest edge cell; their number is stored in
    ``clamped``.
    """
    if isinstance(snapshot, tuple) and len(snapshot) == 2 and not isinstance(snapshot[0], DeviceState):
        x, sigma = (np.asarray(a) for a in snapshot)
    else:
        states = list(snapshot)
        x = np.array([st.x for st in states], dtype=float)
        sigma = np.array([int(st.sigma) for st in states], dtype=np.int8)
    n = x.size
    if n == 0:
        raise ValueError("empty snapshot")
    idx = np.floor((x - grid.x_min) / grid.dx).astype(np.int64)
    outside = (idx < 0) | (idx >= grid.n_cells)
    clamped = int(outside.sum())
    if clamped:
        log.warning("%d of %d devices outside the histogram grid; clamped to edge cells", clamped, n)
        np.clip(idx, 0, grid.n_cells - 1, out=idx)
    on = sigma.astype(bool)
    scale = 1.0 / (n * grid.dx)
    p_up = np.bincount(idx[on], minlength=grid.n_cells) * scale
    p_down = np.bincount(idx[~on], minlength=grid.n_cells) * scale
    return DensityField(grid, p_up, p_down, clamped=clamped)


def h1_metric(empirical: DensityField, stationary: DensityField, scale=1.0) -> float:
    """Scaled L1 distance ``A * sum_j sum_cells |P_j - P_j^st| dx``."""
    if not empirical.grid.same_as(stationary.grid):
        raise ValueError("H1 requires identical grids")
    d = np.abs(empirical.p_up - stationary.p_up).sum() + np.abs(empirical.p_down - stationary.p_down).sum()
    return float(scale * d * empirical.grid.dx)


def field_to_csv(field: DensityField, path, header_lines=()):
    from .io import write_csv
    write_csv(path, ["x", "p_up", "p_down"],
              np.column_stack([field.grid.centers, field.p_up, field.p_down]),
              header_lines)
