"""Wave-speed models and initial-pulse sampling.

Three kinds of media: closed-form synthetic profiles (waveguide, inclusion),
random crops of an externally supplied raster velocity model, and a small
family of randomized synthetic media (constant / layered / smooth) used when
no raster is available. Every generated medium is positive and satisfies the
CFL bound of both solvers, rescaling by a minimal integer divisor when the
raw speeds are too fast.

Initial conditions are Gaussian pulses u0 = exp(-r^2/sigma^2), v0 = 0, with
1/sigma^2 drawn from Normal(250, 10) truncated to [200, 300] and centers
uniform in [-0.5, 0.5]^2 (kept away from the periodic seam; an
origin-centered mode is available).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, RegionError
from .grid import DOMAIN_LENGTH, GridSpec, ScalarField, WaveField, zero_field
from .solver import CFL_LIMIT, COARSE_DT, COARSE_N, FINE_DT, FINE_N, Medium

RASTER_KINDS = ("waveguide", "inclusion", "raster")

INV_SIGMA_SQ_MEAN = 250.0
INV_SIGMA_SQ_STD = 10.0
INV_SIGMA_SQ_RANGE = (200.0, 300.0)
PULSE_CENTER_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class MediumSource:
    """Description of where a medium comes from.

    kind "raster" carries the velocity raster itself (any 2D positive array,
    index units); the synthetic kinds need no payload. scale_divisor records
    the integer the speeds were divided by to reach CFL stability.
    """

    kind: str
    raster: np.ndarray | None = None
    scale_divisor: int = 1

    def __post_init__(self) -> None:
        if self.kind not in RASTER_KINDS:
            raise ConfigError(f"unknown medium kind {self.kind!r}")
        if self.scale_divisor < 1:
            raise ConfigError("scale_divisor must be a positive integer")
        if self.kind == "raster":
            if self.raster is None:
                raise ConfigError("raster kind requires a raster array")
            arr = np.asarray(self.raster, dtype=np.float64)
            if arr.ndim != 2 or min(arr.shape) < 2:
                raise ConfigError("raster must be a 2D array, at least 2x2")
            if not np.all(np.isfinite(arr)) or np.min(arr) <= 0:
                raise DomainError("raster speeds must be finite and positive")
            object.__setattr__(self, "raster", arr)
        elif self.raster is not None:
            raise ConfigError(f"kind {self.kind!r} takes no raster payload")


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian pulse description: center in [-1,1)^2 and 1/sigma^2."""

    center: tuple[float, float]
    inv_sigma_sq: float

    def __post_init__(self) -> None:
        if not self.inv_sigma_sq > 0:
            raise DomainError("inv_sigma_sq must be positive")
        cx, cy = self.center
        if not (-1.0 <= cx < 1.0 and -1.0 <= cy < 1.0):
            raise DomainError(f"pulse center {self.center} outside [-1,1)^2")


# ---------------------------------------------------------------------------
# closed-form profiles


def waveguide_speed(x, y):
    """c(x, y) = 0.7 - 0.3 cos(pi x); slow channel along the y axis."""
    return 0.7 - 0.3 * np.cos(np.pi * np.asarray(x)) + 0.0 * np.asarray(y)


def inclusion_speed(x, y):
    """Gentle vertical gradient with a fast rectangular inclusion."""
    x = np.asarray(x)
    y = np.asarray(y)
    chi = (x > 0.2) & (x < 0.6) & (y > 0.4) & (y < 0.6)
    return 0.7 + 0.05 * y + 0.1 * chi.astype(np.float64)


def _fine_grid() -> GridSpec:
    return GridSpec(FINE_N)


def synth_waveguide() -> Medium:
    grid = _fine_grid()
    xg, yg = grid.coords()
    return Medium.from_fine(ScalarField(grid, waveguide_speed(xg, yg)))


def synth_inclusion() -> Medium:
    grid = _fine_grid()
    xg, yg = grid.coords()
    return Medium.from_fine(ScalarField(grid, inclusion_speed(xg, yg)))


def constant_medium(value: float) -> Medium:
    """Uniform wave speed; the baseline medium for evaluation sweeps."""
    if not value > 0:
        raise DomainError(f"wave speed must be positive, got {value}")
    grid = _fine_grid()
    return Medium.from_fine(ScalarField(grid, np.full(grid.shape, float(value))))


# ---------------------------------------------------------------------------
# raster crops


def min_stable_divisor(c_max: float) -> int:
    """Smallest positive integer q such that c_max/q passes the CFL bound of
    both solvers at the standard grid parameters."""
    if not (math.isfinite(c_max) and c_max > 0):
        raise DomainError(f"c_max must be positive and finite, got {c_max}")
    fine_ratio = FINE_DT / (DOMAIN_LENGTH / FINE_N)
    coarse_ratio = COARSE_DT / (DOMAIN_LENGTH / COARSE_N)
    worst = max(fine_ratio, coarse_ratio)
    q = max(1, math.ceil(c_max * worst / CFL_LIMIT - 1e-12))
    while (c_max / q) * worst > CFL_LIMIT:  # guard ceil against roundoff
        q += 1
    return q


def sample_crop_params(
    src: MediumSource, rng: np.random.Generator
) -> tuple[tuple[float, float], float, float]:
    """Draw (center, side_length, angle) for a random rotated square crop
    guaranteed to fit inside the raster. Angle in radians."""
    if src.kind != "raster":
        raise ConfigError("crop sampling needs a raster source")
    ny, nx = src.raster.shape
    extent = float(min(nx - 1, ny - 1))
    side = float(rng.uniform(0.15, 0.5) * extent)
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    r = side * math.sqrt(0.5)  # circumradius of the rotated square
    if nx - 1 - 2 * r <= 0 or ny - 1 - 2 * r <= 0:
        raise RegionError("raster too small for the sampled crop")
    cx = float(rng.uniform(r, nx - 1 - r))
    cy = float(rng.uniform(r, ny - 1 - r))
    return (cx, cy), side, angle


def crop_medium(
    src: MediumSource,
    center: tuple[float, float] | None = None,
    side_length: float | None = None,
    angle: float | None = None,
    rng: np.random.Generator | None = None,
) -> Medium:
    """Cut a rotated square out of a raster velocity model.

    The square (given in raster index coordinates: center, side, angle in
    radians) is resampled bilinearly onto the 128x128 fine grid with
    cell-centered sample points, then divided by min_stable_divisor so both
    solvers are stable. Fully deterministic when center/side/angle are given;
    any omitted parameter is drawn from rng.
    """
    if src.kind != "raster":
        raise ConfigError("crop_medium needs a raster source")
    if center is None or side_length is None or angle is None:
        if rng is None:
            raise ConfigError("crop parameters omitted and no rng provided")
        s_center, s_side, s_angle = sample_crop_params(src, rng)
        center = center if center is not None else s_center
        side_length = side_length if side_length is not None else s_side
        angle = angle if angle is not None else s_angle
    if side_length <= 0:
        raise RegionError(f"side_length must be positive, got {side_length}")

    raster = src.raster
    ny, nx = raster.shape
    n = FINE_N
    # cell-centered offsets in [-side/2, side/2)
    s = (np.arange(n) + 0.5) / n - 0.5
    xi, eta = np.meshgrid(s * side_length, s * side_length, indexing="xy")
    ca, sa = math.cos(angle), math.sin(angle)
    px = center[0] + ca * xi - sa * eta
    py = center[1] + sa * xi + ca * eta

    slack = 1e-9
    if (
        px.min() < -slack
        or py.min() < -slack
        or px.max() > nx - 1 + slack
        or py.max() > ny - 1 + slack
    ):
        raise RegionError(
            "crop square extends outside the raster "
            f"(x range [{px.min():.3f}, {px.max():.3f}] vs [0, {nx - 1}], "
            f"y range [{py.min():.3f}, {py.max():.3f}] vs [0, {ny - 1}])"
        )

    values = _bilinear_sample(raster, px, py)
    if np.min(values) <= 0:
        raise DomainError("crop produced nonpositive speeds")
    q = min_stable_divisor(float(np.max(values)))
    return Medium.from_fine(ScalarField(_fine_grid(), values / q))


def _bilinear_sample(raster: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    ny, nx = raster.shape
    px = np.clip(px, 0.0, nx - 1.0)
    py = np.clip(py, 0.0, ny - 1.0)
    ix = np.clip(np.floor(px).astype(np.int64), 0, nx - 2)
    iy = np.clip(np.floor(py).astype(np.int64), 0, ny - 2)
    fx = px - ix
    fy = py - iy
    v00 = raster[iy, ix]
    v01 = raster[iy, ix + 1]
    v10 = raster[iy + 1, ix]
    v11 = raster[iy + 1, ix + 1]
    return (
        v00 * (1 - fx) * (1 - fy)
        + v01 * fx * (1 - fy)
        + v10 * (1 - fx) * fy
        + v11 * fx * fy
    )


# ---------------------------------------------------------------------------
# randomized synthetic media (stand-in for raster crops at desk scale)

_SYNTH_KIND_P = (0.35, 0.35, 0.30)  # constant, layered, smooth


def sample_training_medium(rng: np.random.Generator) -> Medium:
    """Draw one random medium for dataset generation.

    Mixture of constant speeds, layered profiles with sharp interfaces, and
    smooth band-limited perturbations. Speeds stay within [0.3, 1.7], far
    inside both CFL bounds, and cover the constant-medium evaluation range.
    """
    grid = _fine_grid()
    kind = rng.choice(3, p=_SYNTH_KIND_P)
    if kind == 0:
        c = np.full(grid.shape, rng.uniform(0.5, 1.5))
    elif kind == 1:
        c = _layered_speeds(grid, rng)
    else:
        c = _smooth_speeds(grid, rng)
    return Medium.from_fine(ScalarField(grid, c))


def _layered_speeds(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    n_layers = int(rng.integers(2, 5))
    cuts = np.sort(rng.uniform(-0.8, 0.8, size=n_layers - 1))
    speeds = rng.uniform(0.4, 1.6, size=n_layers)
    axis_vals = grid.axis_coords()
    idx = np.searchsorted(cuts, axis_vals, side="right")
    line = speeds[idx]
    c = np.tile(line, (grid.n, 1))  # speed varies along x
    if rng.integers(2) == 1:
        c = c.T.copy()  # varies along y instead
    return c


def _smooth_speeds(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    base = rng.uniform(0.7, 1.2)
    amp = rng.uniform(0.1, 0.4)
    # band-limited random field: modes |m| <= 3 in each direction
    m = 3
    coef = rng.standard_normal((2 * m + 1, 2 * m + 1))
    xg, yg = grid.coords()
    field = np.zeros(grid.shape)
    for i in range(-m, m + 1):
        for j in range(-m, m + 1):
            phase = math.pi * (i * xg + j * yg)
            field += coef[i + m, j + m] * np.cos(phase + 2.0 * math.pi * rng.random())
    peak = np.max(np.abs(field))
    if peak > 0:
        field /= peak
    return base + amp * field


# ---------------------------------------------------------------------------
# initial pulses


def gaussian_pulse(grid: GridSpec, spec: PulseSpec) -> WaveField:
    """Pulse u0 = exp(-d^2 / sigma^2) with periodic distance d to the center,
    v0 = 0."""
    xg, yg = grid.coords()
    cx, cy = spec.center
    dx = np.mod(xg - cx + 1.0, DOMAIN_LENGTH) - 1.0
    dy = np.mod(yg - cy + 1.0, DOMAIN_LENGTH) - 1.0
    u = np.exp(-(dx * dx + dy * dy) * spec.inv_sigma_sq)
    return WaveField(ScalarField(grid, u), zero_field(grid))


def sample_inv_sigma_sq(rng: np.random.Generator) -> float:
    """Normal(250, 10) truncated to [200, 300] by rejection."""
    lo, hi = INV_SIGMA_SQ_RANGE
    while True:
        draw = rng.normal(INV_SIGMA_SQ_MEAN, INV_SIGMA_SQ_STD)
        if lo <= draw <= hi:
            return float(draw)


def sample_pulse(
    rng: np.random.Generator, origin_centered: bool = False
) -> tuple[WaveField, PulseSpec]:
    """Draw a random Gaussian pulse on the fine grid.

    Returns (WaveField, PulseSpec). Centers are uniform in [-0.5, 0.5]^2
    unless origin_centered is set.
    """
    inv_sigma_sq = sample_inv_sigma_sq(rng)
    if origin_centered:
        center = (0.0, 0.0)
    else:
        hw = PULSE_CENTER_HALF_WIDTH
        center = (float(rng.uniform(-hw, hw)), float(rng.uniform(-hw, hw)))
    spec = PulseSpec(center=center, inv_sigma_sq=inv_sigma_sq)
    return gaussian_pulse(_fine_grid(), spec), spec
