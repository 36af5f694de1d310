"""1D constant-medium dispersion analysis and the analytic phase correction.

The second-order centered stencil propagates mode k with frequency
omega_dx = (2c/dx) sin(k dx/2) instead of the exact omega = ck. On the
energy pair (q, p) = (du/dx, u_t/c) the exact evolution of one mode is the
rotation R(omega t), the space-discrete/time-continuous evolution is the
near-rotation M(omega_dx t, eps) with off-diagonal factors 1/(1-eps) and
(1-eps), eps = 1 - omega_dx/(ck), and the ideal per-mode correction is
R M^{-1}. Applying that correction mode by mode (a convolution in space)
repairs the coarse phase error exactly for constant c.

All field-level helpers here take and return plain 1D float arrays; the
grid covers one period of [-1, 1), so an n-point field has dx = 2/n and
mode wavenumbers 2*pi*fftfreq(n, dx).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, NumericError

# Taylor coefficients of (2/z) sin(z/2): sum_j SERIES_COEF[j] * z^(2j)
_SERIES_COEF = tuple((-1.0) ** j / (4.0**j * math.factorial(2 * j + 1)) for j in range(6))


def _check_mode(k: float, dx: float) -> None:
    if dx <= 0:
        raise DomainError(f"dx must be positive, got {dx}")
    if abs(k) * dx >= math.pi:
        raise DomainError(f"wavenumber k={k} is aliased on a grid with dx={dx}")


def omega_exact(c: float, k: float) -> float:
    """Exact dispersion relation of the wave equation (right-moving branch)."""
    return c * k


def omega_semidiscrete(c: float, k: float, dx: float) -> float:
    """Dispersion relation of the centered second-order stencil in space,
    continuous in time: (2c/dx) sin(k dx / 2)."""
    _check_mode(k, dx)
    return (2.0 * c / dx) * math.sin(0.5 * k * dx)


def omega_series(c: float, k: float, dx: float, terms: int = 3) -> float:
    """Truncated series ck (1 - (k dx)^2/24 + (k dx)^4/1920 - ...).

    Agrees with the closed form to O((k dx)^(2*terms)).
    """
    if not 1 <= terms <= len(_SERIES_COEF):
        raise DomainError(f"terms must be in [1, {len(_SERIES_COEF)}]")
    z2 = (k * dx) ** 2
    acc = 0.0
    for j in range(terms - 1, -1, -1):
        acc = acc * z2 + _SERIES_COEF[j]
    return c * k * acc


def dispersion_error(c: float, k: float, dx: float) -> float:
    """Absolute phase-speed defect ck - omega_semidiscrete; >= 0 for k >= 0."""
    return c * k - omega_semidiscrete(c, k, dx)


def dispersion_error_rel(c: float, k: float, dx: float) -> float:
    """Relative defect eps = 1 - omega_semidiscrete/(ck), with eps(0) = 0.

    This is the eps appearing inside the evolution and correction matrices.
    Even in k.
    """
    if k == 0.0:
        _check_mode(k, dx)
        return 0.0
    return 1.0 - omega_semidiscrete(c, k, dx) / (c * k)


# ---------------------------------------------------------------------------
# 2x2 symbols on the energy pair (q, p), real form, right-moving branch


def exact_symbol(c: float, k: float, t: float) -> np.ndarray:
    """Rotation by omega*t: the exact one-mode evolution of (q, p)."""
    w = omega_exact(c, k) * t
    cw, sw = math.cos(w), math.sin(w)
    return np.array([[cw, sw], [-sw, cw]])


def semidiscrete_symbol(c: float, k: float, dx: float, t: float) -> np.ndarray:
    """One-mode evolution of (q, p) under the space-discrete model.

    Determinant is exactly 1 for every k (cos^2 + sin^2).
    """
    wt = omega_semidiscrete(c, k, dx) * t
    eps = dispersion_error_rel(c, k, dx)
    cw, sw = math.cos(wt), math.sin(wt)
    return np.array([[cw, sw / (1.0 - eps)], [-(1.0 - eps) * sw, cw]])


def correction_symbol(c: float, k: float, dx: float, t: float) -> np.ndarray:
    """Ideal correction R(omega t) M(omega_dx t, eps)^{-1}.

    Satisfies correction @ M = R identically; M has unit determinant so its
    inverse is the adjugate (no solve needed). Tends to the identity as
    dx -> 0 or t -> 0.
    """
    M = semidiscrete_symbol(c, k, dx, t)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if not math.isfinite(det) or abs(det) < 1e-12:
        raise NumericError(f"coarse evolution matrix is singular for k={k}, dx={dx}")
    M_inv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / det
    return exact_symbol(c, k, t) @ M_inv


# ---------------------------------------------------------------------------
# per-mode application to full 1D fields

_EXACT = "exact"
_SEMI = "semidiscrete"
_CORRECTION = "correction"


def _symbol_entries(
    which: str, c: float, n: int, dx: float, t: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized real-form symbol entries (a11, a12, a21, a22) per mode.

    The k=0 and Nyquist modes get the identity: the zero mode has no phase
    to correct, and the unmatched Nyquist mode of a real field cannot be
    rotated while keeping the field real (its spectral gradient is zero by
    convention anyway).
    """
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=dx)
    degenerate = np.zeros(n, dtype=bool)
    degenerate[0] = True
    if n % 2 == 0:
        degenerate[n // 2] = True
    ks = np.where(degenerate, 1.0, k)  # safe values, overwritten below

    wt = c * ks * t
    wdt = (2.0 * c / dx) * np.sin(0.5 * ks * dx) * t
    one_minus_eps = np.sin(0.5 * ks * dx) / (0.5 * ks * dx)

    cR, sR = np.cos(wt), np.sin(wt)
    cM, sM = np.cos(wdt), np.sin(wdt)

    if which == _EXACT:
        a11, a12, a21, a22 = cR, sR, -sR, cR
    elif which == _SEMI:
        a11, a12, a21, a22 = cM, sM / one_minus_eps, -one_minus_eps * sM, cM
    elif which == _CORRECTION:
        # R(omega t) @ adjugate(M)
        a11 = cR * cM + sR * one_minus_eps * sM
        a12 = -cR * sM / one_minus_eps + sR * cM
        a21 = -sR * cM + cR * one_minus_eps * sM
        a22 = sR * sM / one_minus_eps + cR * cM
    else:  # pragma: no cover
        raise ValueError(which)

    for a, ident in ((a11, 1.0), (a12, 0.0), (a21, 0.0), (a22, 1.0)):
        a[degenerate] = ident
    return a11, a12, a21, a22


def _apply_symbol(
    q: np.ndarray, p: np.ndarray, which: str, c: float, dx: float, t: float
) -> tuple[np.ndarray, np.ndarray]:
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.ndim != 1 or q.shape != p.shape:
        raise DomainError("q and p must be 1D arrays of equal length")
    if c <= 0 or dx <= 0 or t < 0:
        raise DomainError(f"need c > 0, dx > 0, t >= 0, got c={c}, dx={dx}, t={t}")
    n = q.shape[0]
    a11, a12, a21, a22 = _symbol_entries(which, c, n, dx, t)
    spec_q = np.fft.fft(q)
    spec_p = np.fft.fft(p)
    # real-form symbol A conjugated to the complex (q^, p^) pair:
    # D A D^{-1} with D = diag(1, -i), i.e. [[a11, i a12], [-i a21, a22]].
    out_q = a11 * spec_q + 1j * a12 * spec_p
    out_p = -1j * a21 * spec_q + a22 * spec_p
    return np.fft.ifft(out_q).real, np.fft.ifft(out_p).real


def evolve_exact_1d(
    q: np.ndarray, p: np.ndarray, c: float, dx: float, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Evolve an energy pair for time t under the exact wave equation.

    dx only fixes the wavenumber of each mode (period = n*dx); the evolution
    itself is dispersion free.
    """
    return _apply_symbol(q, p, _EXACT, c, dx, t)


def evolve_semidiscrete_1d(
    q: np.ndarray, p: np.ndarray, c: float, dx: float, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Evolve an energy pair for time t under the space-discrete model with
    stencil spacing dx (a closed-form stand-in for the coarse solver)."""
    return _apply_symbol(q, p, _SEMI, c, dx, t)


def correct_coarse_1d(
    q: np.ndarray, p: np.ndarray, c: float, dx: float, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Undo the accumulated phase error of a dx-discrete evolution of
    length t: multiply each Fourier mode of (q, p) by the correction
    symbol and transform back. Output is real to roundoff."""
    return _apply_symbol(q, p, _CORRECTION, c, dx, t)


def energy_norm_1d(q: np.ndarray, p: np.ndarray, dx: float) -> float:
    """1D analogue of the discrete energy: sum (q^2 + p^2) dx."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    return float(np.sum(q * q + p * p) * dx)
