import math

import numpy as np
import pytest

from parawave.dispersion import (
    correct_coarse_1d,
    correction_symbol,
    dispersion_error,
    dispersion_error_rel,
    energy_norm_1d,
    evolve_exact_1d,
    evolve_semidiscrete_1d,
    exact_symbol,
    omega_exact,
    omega_semidiscrete,
    omega_series,
    semidiscrete_symbol,
)
from parawave.errors import DomainError
from parawave.grid import GridSpec, ScalarField, WaveField
from parawave.solver import StepParams, verlet_step

DX = 2.0 / 64.0


# ---------------------------------------------------------------------------
# scalar relations

def test_omega_exact():
    assert omega_exact(1.0, 0.0) == 0.0
    assert math.isclose(omega_exact(2.0, math.pi), 2.0 * math.pi)


def test_omega_semidiscrete_closed_form():
    assert omega_semidiscrete(1.0, 0.0, DX) == 0.0
    k = 3.0 * math.pi
    assert math.isclose(
        omega_semidiscrete(0.8, k, DX), (2 * 0.8 / DX) * math.sin(k * DX / 2)
    )


def test_omega_semidiscrete_rejects_aliased_modes():
    with pytest.raises(DomainError):
        omega_semidiscrete(1.0, 1.1 * math.pi / DX, DX)


def test_series_matches_closed_form():
    c, k = 1.0, math.pi
    gap = abs(omega_semidiscrete(c, k, DX) - omega_series(c, k, DX, terms=3))
    assert gap <= c * k * (k * DX) ** 6


def test_series_term_count_controls_accuracy():
    c, k = 1.3, 8.0 * math.pi
    gaps = [abs(omega_semidiscrete(c, k, DX) - omega_series(c, k, DX, terms=t)) for t in (1, 2, 3)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_semidiscrete_is_second_order_in_dx():
    c, k = 1.0, 2.0 * math.pi
    e1 = abs(omega_exact(c, k) - omega_semidiscrete(c, k, DX))
    e2 = abs(omega_exact(c, k) - omega_semidiscrete(c, k, DX / 2))
    assert 3.5 < e1 / e2 < 4.5


def test_dispersion_error_leading_coefficient():
    c = 1.0
    for k in (0.5, 0.25, 0.125):
        ratio = dispersion_error(c, k, DX) / (c * k**3 * DX**2)
        assert abs(ratio - 1.0 / 24.0) < 2e-3 * (1.0 / 24.0) / k  # tightens as k->0
    assert dispersion_error(c, 0.0, DX) == 0.0


def test_dispersion_error_monotone_in_k():
    ks = np.linspace(0.0, math.pi / DX, 200, endpoint=False)
    errs = [dispersion_error(1.0, k, DX) for k in ks]
    assert all(b >= a - 1e-14 for a, b in zip(errs, errs[1:]))
    assert all(e >= 0.0 for e in errs)


def test_dispersion_error_rel_is_normalized():
    c, k = 0.7, 5 * math.pi
    assert math.isclose(dispersion_error_rel(c, k, DX), dispersion_error(c, k, DX) / (c * k))


# ---------------------------------------------------------------------------
# 2x2 symbols

def test_exact_symbol_is_rotation():
    for t in (0.0, 0.3, 1.7):
        r = exact_symbol(1.2, 4 * math.pi, t)
        assert np.abs(r @ r.T - np.eye(2)).max() < 1e-12
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


def test_semidiscrete_symbol_unit_determinant():
    for k in (math.pi, 5 * math.pi, 20 * math.pi):
        m = semidiscrete_symbol(1.0, k, DX, 0.4)
        assert abs(np.linalg.det(m) - 1.0) < 1e-12


def test_correction_symbol_identity_cases():
    assert np.abs(correction_symbol(1.0, 3 * math.pi, DX, 0.0) - np.eye(2)).max() < 1e-12
    # dx -> 0: epsilon -> 0 and the coarse matrix becomes the exact rotation
    near = correction_symbol(1.0, 3 * math.pi, 1e-6, 0.37)
    assert np.abs(near - np.eye(2)).max() < 1e-9


def test_correction_symbol_matches_bruteforce_product():
    c, k, t = 1.0, 4 * math.pi, 0.1
    omega = c * k
    omega_dx = omega_semidiscrete(c, k, DX)
    eps = 1.0 - omega_dx / omega
    rot = np.array(
        [
            [math.cos(omega * t), math.sin(omega * t)],
            [-math.sin(omega * t), math.cos(omega * t)],
        ]
    )
    m = np.array(
        [
            [math.cos(omega_dx * t), math.sin(omega_dx * t) / (1.0 - eps)],
            [-(1.0 - eps) * math.sin(omega_dx * t), math.cos(omega_dx * t)],
        ]
    )
    oracle = rot @ np.linalg.inv(m)
    assert np.abs(correction_symbol(c, k, DX, t) - oracle).max() < 1e-12


def test_correction_times_coarse_equals_exact_rotation_sweep():
    rng = np.random.default_rng(0)
    for _ in range(100):
        c = rng.uniform(0.3, 2.0)
        k = rng.uniform(0.5, 0.9 * math.pi / DX)
        t = rng.uniform(0.0, 1.0)
        lhs = correction_symbol(c, k, DX, t) @ semidiscrete_symbol(c, k, DX, t)
        rhs = exact_symbol(c, k, t)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_correction_symbol_near_identity_expansion():
    # leading behavior: correction = rotation by the accumulated phase error
    # epsilon*omega*t, up to O(epsilon) in the matrix shape
    c, t = 1.0, 0.5
    k = 2.0 * math.pi
    omega = c * k
    eps = dispersion_error(c, k, DX) / omega
    phase = omega * t - omega_semidiscrete(c, k, DX) * t  # = eps*omega*t
    approx = np.array(
        [[math.cos(phase), math.sin(phase)], [-math.sin(phase), math.cos(phase)]]
    )
    gap = np.abs(correction_symbol(c, k, DX, t) - approx).max()
    assert gap < 10.0 * eps


# ---------------------------------------------------------------------------
# field-level correction

def _gaussian_pair(n, inv_sigma_sq=200.0):
    x = -1.0 + (2.0 / n) * np.arange(n)
    u = np.exp(-inv_sigma_sq * x**2)
    spec = np.fft.fft(u)
    xi = np.pi * np.fft.fftfreq(n, d=1.0 / n)
    xi[n // 2] = 0.0
    q = np.fft.ifft(1j * xi * spec).real
    p = np.zeros(n)
    return q, p


def test_correct_zero_is_zero():
    q, p = correct_coarse_1d(np.zeros(64), np.zeros(64), 1.0, DX, 0.5)
    assert np.abs(q).max() == 0.0 and np.abs(p).max() == 0.0


def test_single_mode_fully_repaired():
    n = 64
    x = -1.0 + DX * np.arange(n)
    q = np.cos(4 * np.pi * x)
    p = np.sin(4 * np.pi * x)
    t, c = 0.7, 1.0
    kq, kp = evolve_semidiscrete_1d(q, p, c, DX, t)
    fixed = correct_coarse_1d(kq, kp, c, DX, t)
    exact = evolve_exact_1d(q, p, c, DX, t)
    assert np.abs(fixed[0] - exact[0]).max() < 1e-8
    assert np.abs(fixed[1] - exact[1]).max() < 1e-8


def test_exact_evolution_preserves_energy():
    n = 128
    rng = np.random.default_rng(1)
    q, p = rng.standard_normal(n), rng.standard_normal(n)
    e0 = energy_norm_1d(q, p, DX)
    q1, p1 = evolve_exact_1d(q, p, 1.0, DX, 0.9)
    assert abs(energy_norm_1d(q1, p1, DX) - e0) < 1e-10 * e0


def test_energy_norm_1d_bruteforce():
    q = np.array([1.0, -2.0, 0.5])
    p = np.array([0.0, 1.0, 2.0])
    dx = 0.25
    want = sum(a * a + b * b for a, b in zip(q, p)) * dx
    assert math.isclose(energy_norm_1d(q, p, dx), want)


def test_gaussian_correction_beats_uncorrected_tenfold():
    n, c, t = 64, 1.0, 0.5
    q0, p0 = _gaussian_pair(n)
    exact_q, exact_p = evolve_exact_1d(q0, p0, c, DX, t)
    coarse_q, coarse_p = evolve_semidiscrete_1d(q0, p0, c, DX, t)
    fixed_q, fixed_p = correct_coarse_1d(coarse_q, coarse_p, c, DX, t)
    e_ref = energy_norm_1d(exact_q, exact_p, DX)
    err_raw = energy_norm_1d(coarse_q - exact_q, coarse_p - exact_p, DX) / e_ref
    err_fix = energy_norm_1d(fixed_q - exact_q, fixed_p - exact_p, DX) / e_ref
    assert err_fix * 10.0 <= err_raw


def test_coarse_solver_phase_advance_converges_to_semidiscrete():
    # a y-constant mode stepped by the 2D scheme must advance its phase by
    # omega_dx * t as dt -> 0, with O(dt^2) error
    mx = 3
    k = np.pi * mx
    c0 = 1.0
    t = 0.1

    def measured_phase(steps):
        g = GridSpec(64)
        x, _ = g.coords()
        u0 = np.cos(k * x)
        w = WaveField(ScalarField(g, u0), ScalarField(g, np.zeros(g.shape)))
        speed = ScalarField(g, np.full(g.shape, c0))
        p = StepParams(h=g.h, k=t / steps, substeps=1)
        for _ in range(steps):
            w = verlet_step(w, speed, p)
        # cos(kx)cos(wt) has amplitude cos(wt) on the original mode
        amp = 2.0 * np.mean(w.u.values[0, :] * np.cos(k * x[0, :]))
        return math.acos(min(1.0, max(-1.0, amp)))

    target = omega_semidiscrete(c0, k, 2.0 / 64.0) * t
    e1 = abs(measured_phase(20) - target)
    e2 = abs(measured_phase(40) - target)
    assert e1 / e2 > 3.0  # second order in dt
