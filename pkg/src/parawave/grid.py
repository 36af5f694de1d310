"""Periodic uniform grids on [-1,1)^d, fields, and grid-transfer operators.

Conventions used across the whole package:

* the domain is the periodic box [-1, 1) in every dimension, so a grid of
  n points per dimension has spacing h = 2/n and nodes x_i = -1 + i*h;
* 2D sample arrays are indexed ``values[iy, ix]`` with x the fastest
  (row-major) index, and all file formats use this layout;
* spectral wavenumbers are xi_m = pi*m for integer mode m, and the unmatched
  Nyquist mode of an even-length real transform has its derivative set to
  zero (there is no real-valued gradient convention that can keep it).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridError, ShapeError

DOMAIN_LENGTH = 2.0

# tensor-product cubic interpolation weights for the midpoint between two
# coarse nodes, applied to the 4 nearest coarse nodes
_PROLONG_W = (-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0)


@dataclass(frozen=True)
class GridSpec:
    """A uniform periodic grid: n points per dimension on [-1,1)^dims.

    n must be a power of two (factor-2 transfer operators and the FFT both
    want it), which also makes h = 2/n exact in binary floating point.
    """

    n: int
    dims: int = 2

    def __post_init__(self) -> None:
        if self.dims not in (1, 2):
            raise GridError(f"dims must be 1 or 2, got {self.dims}")
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise GridError(f"n must be a power of two >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return DOMAIN_LENGTH / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dims

    @property
    def size(self) -> int:
        return self.n**self.dims

    def axis_coords(self) -> np.ndarray:
        """Node coordinates along one axis: -1, -1+h, ..., 1-h."""
        return -1.0 + self.h * np.arange(self.n)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Full coordinate arrays, shaped like a field on this grid.

        Returns (X,) in 1D and (X, Y) in 2D, where X[iy, ix] = x_ix and
        Y[iy, ix] = y_iy.
        """
        ax = self.axis_coords()
        if self.dims == 1:
            return (ax,)
        x, y = np.meshgrid(ax, ax, indexing="xy")
        return x, y

    def coarsen(self) -> "GridSpec":
        if self.n < 4:
            raise GridError(f"grid n={self.n} too small to coarsen")
        return GridSpec(self.n // 2, self.dims)

    def refine(self) -> "GridSpec":
        return GridSpec(self.n * 2, self.dims)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of one scalar function on a GridSpec.

    Values are stored as a float64 array of shape ``grid.shape`` and frozen
    after construction; operations return new fields.
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ShapeError(
                f"field shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("field contains non-finite values")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _require_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _require_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * float(a))

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)

    def shift(self, offsets: tuple[int, ...]) -> "ScalarField":
        """Periodic translation by whole grid cells (last offset is x)."""
        if len(offsets) != self.grid.dims:
            raise ShapeError("one offset per dimension required")
        return ScalarField(self.grid, np.roll(self.values, offsets, range(self.grid.dims)))


@dataclass(frozen=True, eq=False)
class WaveField:
    """State pair (u, v) with v approximating the time derivative of u."""

    u: ScalarField
    v: ScalarField

    def __post_init__(self) -> None:
        _require_same_grid(self.u.grid, self.v.grid)

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    def __add__(self, other: "WaveField") -> "WaveField":
        return WaveField(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "WaveField") -> "WaveField":
        return WaveField(self.u - other.u, self.v - other.v)

    def __mul__(self, a: float) -> "WaveField":
        return WaveField(self.u * a, self.v * a)

    __rmul__ = __mul__

    def negate_velocity(self) -> "WaveField":
        return WaveField(self.u, -self.v)


def _require_same_grid(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridError(f"grid mismatch: {a} vs {b}")


def zero_field(grid: GridSpec) -> ScalarField:
    return ScalarField(grid, np.zeros(grid.shape))


def zero_wave(grid: GridSpec) -> WaveField:
    return WaveField(zero_field(grid), zero_field(grid))


# ---------------------------------------------------------------------------
# transfer operators


def restrict_values(a: np.ndarray) -> np.ndarray:
    """Full-weighting restriction on raw samples (periodic)."""
    if a.ndim == 1:
        s = 0.5 * a + 0.25 * (np.roll(a, 1) + np.roll(a, -1))
        return s[::2]
    center = 0.25 * a
    edges = 0.125 * (
        np.roll(a, 1, 0) + np.roll(a, -1, 0) + np.roll(a, 1, 1) + np.roll(a, -1, 1)
    )
    corners = 0.0625 * (
        np.roll(a, (1, 1), (0, 1))
        + np.roll(a, (1, -1), (0, 1))
        + np.roll(a, (-1, 1), (0, 1))
        + np.roll(a, (-1, -1), (0, 1))
    )
    return (center + edges + corners)[::2, ::2]


def restrict(f: ScalarField) -> ScalarField:
    """Full-weighting restriction onto the factor-2 coarser grid.

    Each coarse node takes the weighted average of the co-located fine node
    and its neighbors: weights 1/4 (center), 1/8 (edges), 1/16 (corners) in
    2D, and 1/4, 1/2, 1/4 in 1D. Linear, deterministic, acts as a low-pass
    filter; constants are preserved exactly.
    """
    if f.grid.n < 4:
        raise GridError(f"cannot restrict grid with n={f.grid.n} < 4")
    return ScalarField(f.grid.coarsen(), restrict_values(f.values))


def _prolong_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Insert cubic-interpolated midpoints along one axis (periodic)."""
    w0, w1, w2, w3 = _PROLONG_W
    mid = (
        w0 * np.roll(a, 1, axis)
        + w1 * a
        + w2 * np.roll(a, -1, axis)
        + w3 * np.roll(a, -2, axis)
    )
    out = np.stack([a, mid], axis=axis + 1)
    shape = list(a.shape)
    shape[axis] *= 2
    return out.reshape(shape)


def prolong_values(a: np.ndarray) -> np.ndarray:
    """Fourth-order periodic interpolation on raw samples."""
    out = _prolong_axis(a, a.ndim - 1)
    if a.ndim == 2:
        out = _prolong_axis(out, 0)
    return out


def prolong(f: ScalarField) -> ScalarField:
    """Fourth-order interpolation onto the factor-2 finer grid.

    Coarse-aligned fine nodes copy the coarse value; inserted nodes use the
    tensor-product cubic stencil with weights (-1/16, 9/16, 9/16, -1/16) on
    the four nearest coarse nodes per dimension. Linear; exact on constants
    and on polynomials of degree <= 3 between nodes.
    """
    if f.grid.n < 4:
        raise GridError(f"cannot prolong grid with n={f.grid.n} < 4 (stencil wraps onto itself)")
    return ScalarField(f.grid.refine(), prolong_values(f.values))


def restrict_wave(w: WaveField) -> WaveField:
    """Full-weighting restriction applied to both components."""
    return WaveField(restrict(w.u), restrict(w.v))


def prolong_wave(w: WaveField) -> WaveField:
    """Fourth-order interpolation applied to both components."""
    return WaveField(prolong(w.u), prolong(w.v))


# ---------------------------------------------------------------------------
# spectral utilities


def wavenumbers(n: int) -> np.ndarray:
    """Differentiation wavenumbers pi*m in FFT layout, Nyquist zeroed."""
    xi = np.pi * np.fft.fftfreq(n, d=1.0 / n)
    xi[n // 2] = 0.0
    return xi


def spectral_grad_values(a: np.ndarray) -> tuple[np.ndarray, ...]:
    if a.ndim == 1:
        xi = wavenumbers(a.shape[0])
        return (np.fft.ifft(1j * xi * np.fft.fft(a)).real,)
    n0, n1 = a.shape
    spec = np.fft.fft2(a)
    xix = wavenumbers(n1)[None, :]
    xiy = wavenumbers(n0)[:, None]
    fx = np.fft.ifft2(1j * xix * spec).real
    fy = np.fft.ifft2(1j * xiy * spec).real
    return fx, fy


def spectral_grad(f: ScalarField) -> tuple[ScalarField, ...]:
    """Fourier-space gradient of a periodic field.

    Returns (df/dx,) in 1D and (df/dx, df/dy) in 2D. Each mode xi is
    multiplied by i*xi; the Nyquist mode's derivative is set to zero so the
    result stays real. Exact for band-limited fields below Nyquist.
    """
    parts = spectral_grad_values(f.values)
    return tuple(ScalarField(f.grid, p) for p in parts)
