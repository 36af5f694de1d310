"""Energy-component map, its Fourier pseudo-inverse, and energy metrics.

The map Lambda sends (u, v) to the triple (qx, qy, p) = (du/dx, du/dy, v/c)
whose squared l2 norm (times the cell area) is the discrete wave energy.
Networks and the online Procrustes correction operate in this representation;
lambda_pinv brings corrected components back to (u, v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridError
from .grid import GridSpec, ScalarField, WaveField, spectral_grad, wavenumbers


@dataclass(frozen=True, eq=False)
class EnergyField:
    """Triple (qx, qy, p) of scalar fields on one 2D grid."""

    qx: ScalarField
    qy: ScalarField
    p: ScalarField

    def __post_init__(self) -> None:
        if not (self.qx.grid == self.qy.grid == self.p.grid):
            raise GridError("energy components must share one grid")
        if self.qx.grid.dims != 2:
            raise GridError("EnergyField is 2D only")

    @property
    def grid(self) -> GridSpec:
        return self.qx.grid

    def stack(self) -> np.ndarray:
        """Channel-major array (3, n, n) in the fixed order (qx, qy, p)."""
        return np.stack([self.qx.values, self.qy.values, self.p.values])

    @classmethod
    def from_stack(cls, grid: GridSpec, a: np.ndarray) -> "EnergyField":
        if a.shape != (3,) + grid.shape:
            raise GridError(f"expected shape {(3,) + grid.shape}, got {a.shape}")
        return cls(
            ScalarField(grid, a[0]), ScalarField(grid, a[1]), ScalarField(grid, a[2])
        )


def lambda_map(w: WaveField, c: ScalarField) -> EnergyField:
    """Energy components of a wave field: (du/dx, du/dy, v/c). Linear in w."""
    if w.grid != c.grid:
        raise GridError("wave field and speed must share one grid")
    if np.any(c.values <= 0.0):
        raise DomainError("wave speed must be positive everywhere")
    qx, qy = spectral_grad(w.u)
    p = ScalarField(w.grid, w.v.values / c.values)
    return EnergyField(qx, qy, p)


def lambda_pinv(e: EnergyField, c: ScalarField, c0: float) -> WaveField:
    """Reconstruct (u, v) from energy components.

    In Fourier space fft(u) = -i (xi . fft(q)) / |xi|^2 with the Nyquist-zeroed
    wavenumber convention of spectral_grad; the zero-mode coefficient is set
    to c0 so that the discrete sum of u over the grid equals c0 (the FFT here
    is unnormalized, its zero coefficient IS the grid sum). Modes with
    |xi| = 0 under the convention (the mean and the three pure-Nyquist modes)
    carry no gradient information and reconstruct as zero. v = c*p pointwise.

    Left-inverts lambda_map exactly on fields with no pure-Nyquist content
    in u, given c0 = sum(u).
    """
    if e.grid != c.grid:
        raise GridError("energy field and speed must share one grid")
    if np.any(c.values <= 0.0):
        raise DomainError("wave speed must be positive everywhere")
    n = e.grid.n
    xix = wavenumbers(n)[None, :]
    xiy = wavenumbers(n)[:, None]
    denom = xix * xix + xiy * xiy
    spec_qx = np.fft.fft2(e.qx.values)
    spec_qy = np.fft.fft2(e.qy.values)
    with np.errstate(divide="ignore", invalid="ignore"):
        spec_u = -1j * (xix * spec_qx + xiy * spec_qy) / denom
    spec_u[denom == 0.0] = 0.0
    spec_u[0, 0] = c0
    u = np.fft.ifft2(spec_u).real
    v = c.values * e.p.values
    return WaveField(ScalarField(e.grid, u), ScalarField(e.grid, v))


def energy_norm(e: EnergyField) -> float:
    """Discrete energy: sum over the grid of (qx^2 + qy^2 + p^2) * h^2."""
    h2 = e.grid.h * e.grid.h
    qx, qy, p = e.qx.values, e.qy.values, e.p.values
    return float(np.sum(qx * qx + qy * qy + p * p) * h2)


def rel_energy_error(w: WaveField, w_ref: WaveField, c: ScalarField) -> float:
    """Energy of Lambda(w - w_ref) relative to the energy of Lambda(w_ref)."""
    denom = energy_norm(lambda_map(w_ref, c))
    if denom == 0.0:
        raise DomainError("reference field has zero energy")
    return energy_norm(lambda_map(w - w_ref, c)) / denom
