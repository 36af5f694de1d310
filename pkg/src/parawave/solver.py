"""Leapfrog (velocity-Verlet) stepping for the 2D periodic wave equation.

The scheme advances (u, v) ~ (u, u_t) for u_tt = c(x)^2 Lap(u):

    u+ = u + k v + (k^2/2) c^2 D2(u) / h^2
    v+ = v + (k/2) c^2 (D2(u) + D2(u+)) / h^2

with D2 the undivided 5-point stencil. Two instances matter everywhere:
the fine solver (n=128, dt=1/1280) used as ground truth and the coarse
solver (n=64, dt=1/160), both stepping windows of length dt_star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, GridError, ShapeError, StabilityError
from .grid import GridSpec, ScalarField, WaveField, restrict

FINE_N = 128
COARSE_N = 64
FINE_DT = 1.0 / 1280.0
COARSE_DT = 1.0 / 160.0

# 2D five-point leapfrog stability bound on c*k/h
CFL_LIMIT = 1.0 / math.sqrt(2.0)
_CFL_SLACK = 1e-12


@dataclass(frozen=True)
class StepParams:
    """One solver's discretization: spatial step h, time step k, and the
    number of substeps per window, so that dt_star = substeps * k."""

    h: float
    k: float
    substeps: int

    def __post_init__(self) -> None:
        if self.h <= 0 or self.k <= 0:
            raise ConfigError(f"h and k must be positive, got h={self.h}, k={self.k}")
        if self.substeps < 1:
            raise ConfigError(f"substeps must be >= 1, got {self.substeps}")

    @property
    def dt_star(self) -> float:
        return self.substeps * self.k


@dataclass(frozen=True, eq=False)
class Medium:
    """Wave speed c > 0 on the fine grid plus its restriction to the coarse
    grid (full weighting keeps positivity, its weights are a convex sum)."""

    c: ScalarField
    c_coarse: ScalarField

    def __post_init__(self) -> None:
        if self.c.values.min() <= 0.0 or self.c_coarse.values.min() <= 0.0:
            raise DomainError("wave speed must be positive everywhere")
        if self.c_coarse.grid != self.c.grid.coarsen():
            raise GridError("c_coarse must live on the coarsened fine grid")

    @classmethod
    def from_fine(cls, c: ScalarField) -> "Medium":
        return cls(c, restrict(c))

    @property
    def c_max(self) -> float:
        return float(self.c.values.max())


def _substep_count(dt_star: float, k: float) -> int:
    steps = dt_star / k
    rounded = round(steps)
    if abs(steps - rounded) > 1e-9 * max(1.0, abs(steps)):
        raise ConfigError(
            f"dt_star={dt_star} is not an integer multiple of the time step {k}"
        )
    if rounded < 0:
        raise ConfigError("dt_star must be nonnegative")
    return int(rounded)


def fine_params(dt_star: float, n: int = FINE_N, k: float = FINE_DT) -> StepParams:
    return StepParams(2.0 / n, k, _substep_count(dt_star, k))


def coarse_params(dt_star: float, n: int = COARSE_N, k: float = COARSE_DT) -> StepParams:
    return StepParams(2.0 / n, k, _substep_count(dt_star, k))


def cfl_margin(m: Medium, p: StepParams) -> float:
    """Stability margin 1/sqrt(2) - c_max*k/h; negative means unstable.

    Uses the fine-grid c_max, which is conservative for the coarse solver
    too (restriction is an average, it cannot exceed the fine maximum).
    """
    return CFL_LIMIT - m.c_max * p.k / p.h


def _check_cfl(c_max: float, k: float, h: float) -> None:
    if c_max * k / h > CFL_LIMIT - _CFL_SLACK:
        raise StabilityError(
            f"CFL violated: c_max*k/h = {c_max * k / h:.6f} exceeds "
            f"{CFL_LIMIT:.6f} - {_CFL_SLACK:g}"
        )


def _lap5(a: np.ndarray) -> np.ndarray:
    return (
        np.roll(a, 1, 0)
        + np.roll(a, -1, 0)
        + np.roll(a, 1, 1)
        + np.roll(a, -1, 1)
        - 4.0 * a
    )


def _verlet_raw(
    u: np.ndarray, v: np.ndarray, half_k2c2_h2: np.ndarray, half_kc2_h2: np.ndarray, k: float
) -> tuple[np.ndarray, np.ndarray]:
    lap_u = _lap5(u)
    u_next = u + k * v + half_k2c2_h2 * lap_u
    v_next = v + half_kc2_h2 * (lap_u + _lap5(u_next))
    return u_next, v_next


def _coef(c: np.ndarray, k: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    c2_h2 = (c * c) / (h * h)
    return (0.5 * k * k) * c2_h2, (0.5 * k) * c2_h2


def verlet_step(w: WaveField, c: ScalarField, p: StepParams, *, check_cfl: bool = True) -> WaveField:
    """One velocity-Verlet step of length p.k. Linear in w."""
    if w.grid.dims != 2:
        raise GridError("the solver is 2D only")
    if w.grid != c.grid:
        raise ShapeError("wave field and speed must share one grid")
    if abs(w.grid.h - p.h) > 1e-15:
        raise ShapeError(f"grid spacing {w.grid.h} does not match step params h={p.h}")
    if check_cfl:
        _check_cfl(float(c.values.max()), p.k, p.h)
    a, b = _coef(c.values, p.k, p.h)
    u, v = _verlet_raw(w.u.values, w.v.values, a, b, p.k)
    return WaveField(ScalarField(w.grid, u), ScalarField(w.grid, v))


def _propagate(w: WaveField, c: ScalarField, k: float, steps: int, check_cfl: bool) -> WaveField:
    if w.grid.dims != 2:
        raise GridError("the solver is 2D only")
    if w.grid != c.grid:
        raise ShapeError("wave field and speed must share one grid")
    if steps == 0:
        return w
    h = w.grid.h
    if check_cfl:
        _check_cfl(float(c.values.max()), k, h)
    a, b = _coef(c.values, k, h)
    u, v = w.u.values, w.v.values
    for _ in range(steps):
        u, v = _verlet_raw(u, v, a, b, k)
    return WaveField(ScalarField(w.grid, u), ScalarField(w.grid, v))


def fine_propagate(
    w: WaveField, m: Medium, dt_star: float, *, k: float = FINE_DT, check_cfl: bool = True
) -> WaveField:
    """Advance a fine-grid field by dt_star with the fine solver."""
    if w.grid != m.c.grid:
        raise ShapeError("field must live on the medium's fine grid")
    return _propagate(w, m.c, k, _substep_count(dt_star, k), check_cfl)


def coarse_propagate(
    w: WaveField, m: Medium, dt_star: float, *, k: float = COARSE_DT, check_cfl: bool = True
) -> WaveField:
    """Advance a coarse-grid field by dt_star with the coarse solver."""
    if w.grid != m.c_coarse.grid:
        raise ShapeError("field must live on the medium's coarse grid")
    return _propagate(w, m.c_coarse, k, _substep_count(dt_star, k), check_cfl)
