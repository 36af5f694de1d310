import math

import numpy as np
import pytest

from helpers import naive_verlet_step, random_wave, verlet_mode_matrix
from parawave.energy import energy_norm, lambda_map, rel_energy_error
from parawave.errors import ConfigError, DomainError, GridError, ShapeError, StabilityError
from parawave.grid import GridSpec, ScalarField, WaveField, restrict, zero_wave
from parawave.media import constant_medium, synth_inclusion, synth_waveguide
from parawave.solver import (
    CFL_LIMIT,
    COARSE_DT,
    COARSE_N,
    FINE_DT,
    FINE_N,
    Medium,
    StepParams,
    cfl_margin,
    coarse_params,
    coarse_propagate,
    fine_params,
    fine_propagate,
    verlet_step,
)


def const_field(n, value):
    return ScalarField(GridSpec(n), np.full((n, n), float(value)))


def mode_wave(grid, c_u, c_v, mx, my):
    x, y = grid.coords()
    shape = np.cos(np.pi * (mx * x + my * y))
    return WaveField(ScalarField(grid, c_u * shape), ScalarField(grid, c_v * shape)), shape


# ---------------------------------------------------------------------------
# parameters

def test_table_parameters():
    assert FINE_N == 128 and COARSE_N == 64
    assert FINE_DT == 1.0 / 1280.0 and COARSE_DT == 1.0 / 160.0


def test_substep_counts():
    assert fine_params(0.1).substeps == 128
    assert coarse_params(0.1).substeps == 16
    assert coarse_params(0.2).substeps == 32
    assert coarse_params(0.25).substeps == 40


def test_non_integer_substeps_rejected():
    with pytest.raises(ConfigError):
        fine_params(0.1001)


def test_step_params_validation():
    with pytest.raises(ConfigError):
        StepParams(h=0.0, k=0.1, substeps=1)
    with pytest.raises(ConfigError):
        StepParams(h=0.1, k=-0.1, substeps=1)
    with pytest.raises(ConfigError):
        StepParams(h=0.1, k=0.1, substeps=0)


def test_cfl_margin_values():
    m = Medium.from_fine(const_field(FINE_N, 1.0))
    p = StepParams(h=0.1, k=0.05, substeps=1)
    assert math.isclose(cfl_margin(m, p), 1.0 / math.sqrt(2.0) - 0.5)
    m2 = Medium.from_fine(const_field(FINE_N, 2.0))
    assert cfl_margin(m2, StepParams(h=0.1, k=0.1, substeps=1)) < 0.0
    # the published table parameters leave room for speeds up to 3
    m3 = Medium.from_fine(const_field(FINE_N, 3.0))
    assert cfl_margin(m3, fine_params(0.1)) > 0.0
    assert cfl_margin(m3, coarse_params(0.1)) > 0.0


def test_medium_requires_positive_speed():
    vals = np.ones((FINE_N, FINE_N))
    vals[3, 5] = 0.0
    with pytest.raises(DomainError):
        Medium.from_fine(ScalarField(GridSpec(FINE_N), vals))


def test_medium_coarse_grid_checked():
    c = const_field(FINE_N, 1.0)
    with pytest.raises(GridError):
        Medium(c, const_field(32, 1.0))
    m = Medium.from_fine(c)
    assert np.allclose(m.c_coarse.values, restrict(c).values)


# ---------------------------------------------------------------------------
# single step

def test_verlet_step_constant_field_unchanged():
    g = GridSpec(32)
    w = WaveField(ScalarField(g, np.full(g.shape, 2.3)), ScalarField(g, np.zeros(g.shape)))
    c = ScalarField(g, np.full(g.shape, 0.8))
    out = verlet_step(w, c, StepParams(h=g.h, k=g.h / 4, substeps=1))
    assert np.array_equal(out.u.values, w.u.values)
    assert np.abs(out.v.values).max() == 0.0


def test_verlet_step_matches_bruteforce_stencil():
    g = GridSpec(16)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.shape)
    v = rng.standard_normal(g.shape)
    cv = 1.0 + 0.5 * rng.random(g.shape)
    k = g.h / 4.0
    out = verlet_step(
        WaveField(ScalarField(g, u), ScalarField(g, v)),
        ScalarField(g, cv),
        StepParams(h=g.h, k=k, substeps=1),
    )
    u2, v2 = naive_verlet_step(u, v, cv, k, g.h)
    assert np.abs(out.u.values - u2).max() < 1e-14
    assert np.abs(out.v.values - v2).max() < 1e-14


def test_verlet_step_mode_rotation_matches_amplification_matrix():
    g = GridSpec(64)
    c0 = 0.9
    k = g.h / 3.0
    p = StepParams(h=g.h, k=k, substeps=1)
    c = ScalarField(g, np.full(g.shape, c0))
    for mx, my, a0, b0 in [(1, 0, 1.0, 0.0), (3, 2, 0.4, -1.2), (0, 5, -0.7, 0.3)]:
        w, shape = mode_wave(g, a0, b0, mx, my)
        out = verlet_step(w, c, p)
        m2 = verlet_mode_matrix(c0, np.pi * mx, np.pi * my, k, g.h)
        a1, b1 = m2 @ (a0, b0)
        assert np.abs(out.u.values - a1 * shape).max() < 1e-13
        assert np.abs(out.v.values - b1 * shape).max() < 1e-13
        assert abs(np.linalg.det(m2) - 1.0) < 1e-14


def test_cfl_enforced():
    g = GridSpec(FINE_N)
    w = zero_wave(g)
    m = Medium.from_fine(const_field(FINE_N, 15.0))  # 15 * dt/h = 0.75 > 1/sqrt(2)
    with pytest.raises(StabilityError):
        fine_propagate(w, m, 0.1)
    # the override exists for deliberate experiments
    out = fine_propagate(w, m, FINE_DT, check_cfl=False)
    assert np.all(np.isfinite(out.u.values))


# ---------------------------------------------------------------------------
# propagators

def test_propagate_zero_time_is_identity():
    g = GridSpec(FINE_N)
    w = random_wave(g, np.random.default_rng(1), k_max=10)
    m = Medium.from_fine(const_field(FINE_N, 1.0))
    out = fine_propagate(w, m, 0.0)
    assert np.array_equal(out.u.values, w.u.values)
    assert np.array_equal(out.v.values, w.v.values)


def test_propagate_composes():
    g = GridSpec(FINE_N)
    w = random_wave(g, np.random.default_rng(2), k_max=8)
    m = synth_waveguide()
    two = fine_propagate(w, m, 2 * FINE_DT)
    one_one = fine_propagate(fine_propagate(w, m, FINE_DT), m, FINE_DT)
    assert np.abs(two.u.values - one_one.u.values).max() < 1e-14
    assert np.abs(two.v.values - one_one.v.values).max() < 1e-14


def test_fine_propagate_mode_phase_matches_matrix_power():
    g = GridSpec(FINE_N)
    c0 = 1.0
    m = constant_medium(c0)
    steps = 64
    dt_star = steps * FINE_DT
    a0, b0 = 1.0, 0.5
    w, shape = mode_wave(g, a0, b0, 2, 1)
    out = fine_propagate(w, m, dt_star)
    m2 = np.linalg.matrix_power(
        verlet_mode_matrix(c0, 2 * np.pi, np.pi, FINE_DT, g.h), steps
    )
    a1, b1 = m2 @ (a0, b0)
    assert np.abs(out.u.values - a1 * shape).max() < 1e-11
    assert np.abs(out.v.values - b1 * shape).max() < 1e-11


def test_coarse_propagate_uses_coarse_grid():
    w = zero_wave(GridSpec(COARSE_N))
    m = synth_waveguide()
    out = coarse_propagate(w, m, 0.2)
    assert out.grid.n == COARSE_N
    with pytest.raises(ShapeError):
        coarse_propagate(zero_wave(GridSpec(FINE_N)), m, 0.2)


def test_linearity():
    g = GridSpec(COARSE_N)
    rng = np.random.default_rng(3)
    w1 = random_wave(g, rng, k_max=8)
    w2 = random_wave(g, rng, k_max=8)
    m = synth_waveguide()
    lhs = coarse_propagate(1.7 * w1 + (-0.6) * w2, m, 0.2)
    r1 = coarse_propagate(w1, m, 0.2)
    r2 = coarse_propagate(w2, m, 0.2)
    rhs = 1.7 * r1 + (-0.6) * r2
    scale = np.abs(rhs.u.values).max()
    assert np.abs(lhs.u.values - rhs.u.values).max() < 1e-12 * max(1.0, scale)
    assert np.abs(lhs.v.values - rhs.v.values).max() < 1e-12 * max(1.0, scale)


@pytest.mark.parametrize("make_medium", [synth_waveguide, synth_inclusion])
def test_time_reversibility(make_medium):
    m = make_medium()
    g = GridSpec(FINE_N)
    w0 = random_wave(g, np.random.default_rng(4), k_max=12)
    fwd = fine_propagate(w0, m, 0.5)
    back = fine_propagate(fwd.negate_velocity(), m, 0.5).negate_velocity()
    assert np.abs(back.u.values - w0.u.values).max() < 1e-11
    assert np.abs(back.v.values - w0.v.values).max() < 1e-11


@pytest.mark.parametrize("make_medium", [synth_waveguide, synth_inclusion])
def test_energy_drift_over_unit_time(make_medium):
    m = make_medium()
    g = GridSpec(FINE_N)
    w0 = random_wave(g, np.random.default_rng(5), k_max=10)
    e0 = energy_norm(lambda_map(w0, m.c))
    e1 = energy_norm(lambda_map(fine_propagate(w0, m, 1.0), m.c))
    assert abs(e1 - e0) / e0 <= 1e-2


def test_second_order_convergence():
    # same smooth physical setup on three grids; errors against the finest
    # must shrink at order >= 1.8 per (h, k) halving
    def run(n, steps):
        g = GridSpec(n)
        x, y = g.coords()
        cvals = 0.7 - 0.3 * np.cos(np.pi * x)
        u0 = np.exp(-8.0 * (x**2 + y**2))
        w = WaveField(ScalarField(g, u0), ScalarField(g, np.zeros_like(u0)))
        p = StepParams(h=g.h, k=0.25 / steps, substeps=steps)
        return verlet_step(w, ScalarField(g, cvals), p)

    outs = {n: run(n, steps) for n, steps in [(32, 20), (64, 40), (128, 80)]}

    def down(vals, factor):
        return vals[::factor, ::factor]

    e1 = np.abs(down(outs[128].u.values, 4) - outs[32].u.values).max()
    e2 = np.abs(down(outs[128].u.values, 2) - outs[64].u.values).max()
    order = math.log2(e1 / e2)
    assert order >= 1.8


def test_rel_energy_error_zero_for_identical():
    g = GridSpec(COARSE_N)
    w = random_wave(g, np.random.default_rng(6), k_max=6)
    m = synth_waveguide()
    out = coarse_propagate(w, m, 0.2)
    assert rel_energy_error(out, out, m.c_coarse) == 0.0
