"""Parallel-in-time iterations for the periodic wave equation.

Three variants share one skeleton

    u[k+1][n+1] = C(u[k+1][n]) + F(u[k][n]) - C(u[k][n])

with F the serial fine solver over one window and C a cheap coarse
estimator on the fine grid:

  plain       C = interpolate . coarse solve . restrict
  enhanced    C = network-corrected coarse step (jnet.enhanced_step)
  procrustes  C = lambda_pinv . Omega_k . lambda_map . (plain C), where
              Omega_k solves an orthogonal Procrustes problem fitted to the
              current iterate's coarse/fine column pairs in energy variables

Within one sweep the bracket F(u[k][n]) - C(u[k][n]) is evaluated with the
same operator C as the leading term, so once u[k][n] has converged to the
fine solution the correction cancels exactly and iterates are bitwise equal
to the serial fine solution (finite-termination: k >= n implies exact).

The fine applications within an iteration are independent and run as an
order-preserving parallel map; results are identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .energy import EnergyField, energy_norm, lambda_map, lambda_pinv, rel_energy_error
from .errors import ConfigError, NumericError
from .grid import WaveField, prolong_wave, restrict_wave
from .jnet import JNet, enhanced_step
from .solver import Medium, coarse_propagate, fine_propagate

BLOWUP_FACTOR = 1e6


def coarse_tilde(w: WaveField, m: Medium, dt_star: float) -> WaveField:
    """Interpolated coarse propagator: prolong(coarse(restrict(w))).

    Not the identity even at dt_star = 0; the restrict/prolong round trip
    loses the upper half of the spectrum, which is exactly the defect the
    correction network is trained to repair.
    """
    return prolong_wave(coarse_propagate(restrict_wave(w), m, dt_star))


# ---------------------------------------------------------------------------
# orthogonal Procrustes solve in factored form


@dataclass(frozen=True)
class OrthogonalOperator:
    """Orthogonal map stored as identity plus a low-rank rotation.

    basis_v and basis_u are two orthonormal bases (d x w) of the same
    subspace W; the map sends basis_v[:, i] to basis_u[:, i] and acts as the
    identity on the orthogonal complement of W. The first `rank` column
    pairs are the Procrustes-matched directions; the rest complete the
    bases so the map is globally orthogonal.
    """

    basis_v: np.ndarray
    basis_u: np.ndarray
    rank: int

    @property
    def dim(self) -> int:
        return self.basis_v.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.dim == 0:
            return np.array(x, copy=True)
        coords = self.basis_v.T @ x
        return x + (self.basis_u - self.basis_v) @ coords

    def apply_energy(self, e: EnergyField) -> EnergyField:
        out = self.apply(e.stack().ravel())
        return EnergyField.from_stack(e.grid, out.reshape(e.stack().shape))

    def matrix(self, d: int) -> np.ndarray:
        """Dense d x d realization; for small-d diagnostics only."""
        return self.apply(np.eye(d))


def identity_operator(d: int) -> OrthogonalOperator:
    return OrthogonalOperator(np.zeros((d, 0)), np.zeros((d, 0)), 0)


def _orthonormal_columns(a: np.ndarray, count: int) -> np.ndarray:
    """First `count` left singular vectors of a; exact orthonormality."""
    if count == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s.shape[0] < count or s[count - 1] <= 0:
        raise NumericError("degenerate subspace completion in Procrustes solve")
    return u[:, :count]


def procrustes_solve(g_mat: np.ndarray, f_mat: np.ndarray) -> OrthogonalOperator:
    """Minimize ||Omega G - F||_F over orthogonal Omega, in factored form.

    Only the joint column space matters: the SVD of F G^T is computed via a
    small Gram-sized problem, Omega maps the right singular directions onto
    the left ones, and the completion prefers determinant +1 (a rotation)
    whenever the data leaves that freedom. Rank-0 data yields the identity.
    """
    g = np.asarray(g_mat, dtype=np.float64)
    f = np.asarray(f_mat, dtype=np.float64)
    if g.ndim != 2 or f.ndim != 2 or g.shape != f.shape:
        raise ConfigError(f"column matrices must share a shape, got {g.shape}, {f.shape}")
    d = g.shape[0]
    if g.shape[1] == 0 or not (np.any(g) or np.any(f)):
        return identity_operator(d)

    q_g, r_g = np.linalg.qr(g)
    q_f, r_f = np.linalg.qr(f)
    # F G^T = q_f (r_f r_g^T) q_g^T; pair directions via the small SVD
    u_s, sigma, vt_s = np.linalg.svd(r_f @ r_g.T)
    if sigma[0] <= 0:
        return identity_operator(d)
    r = int(np.sum(sigma > 1e-12 * sigma[0]))
    u_bar = q_f @ u_s[:, :r]
    v_bar = q_g @ vt_s[:r].T

    # complete both bases to the joint space W = span(v_bar) + span(u_bar)
    resid = u_bar - v_bar @ (v_bar.T @ u_bar)
    res_s = np.linalg.svd(resid, full_matrices=False, compute_uv=False) if r else np.array([])
    extra = int(np.sum(res_s > 1e-12 * max(1.0, float(res_s[0])))) if res_s.size else 0
    v_prime = _orthonormal_columns(resid, extra)
    basis_v = np.concatenate((v_bar, v_prime), axis=1)
    u_prime = _orthonormal_columns(basis_v - u_bar @ (u_bar.T @ basis_v), extra)
    basis_u = np.concatenate((u_bar, u_prime), axis=1)

    if extra > 0 and np.linalg.det(basis_v.T @ basis_u) < 0:
        basis_u[:, -1] *= -1.0  # prefer a rotation over a reflection
    return OrthogonalOperator(basis_v, basis_u, r)


def procrustes_objective(
    omega: OrthogonalOperator, g_mat: np.ndarray, f_mat: np.ndarray
) -> float:
    """||Omega G - F||_F for a candidate operator."""
    return float(np.linalg.norm(omega.apply(np.asarray(g_mat)) - np.asarray(f_mat)))


# ---------------------------------------------------------------------------
# iteration driver


@dataclass
class PararealRun:
    """All iterates of one parallel-in-time study.

    snapshots[k][n] is the fine-grid iterate after n windows at iteration k
    (k = 0 is the coarse initialization sweep); errors[k, n] the relative
    energy error against the serial fine reference.
    """

    variant: str
    dt_star: float
    n_windows: int
    iterations: int
    snapshots: list[list[WaveField]]
    errors: np.ndarray
    unstable: bool
    fine_apps_per_iteration: int
    omegas: list[OrthogonalOperator] = field(default_factory=list)


def _parallel_map(fn: Callable, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _check_run_args(w0: WaveField, m: Medium, n_windows: int, iterations: int, dt_star: float):
    if w0.grid != m.c.grid:
        raise ConfigError("initial field must live on the medium's fine grid")
    if n_windows < 1:
        raise ConfigError("need at least one time window")
    if iterations < 0:
        raise ConfigError("iterations must be nonnegative")
    if dt_star <= 0:
        raise ConfigError("dt_star must be positive")


def serial_fine_trajectory(
    w0: WaveField, m: Medium, n_windows: int, dt_star: float
) -> list[WaveField]:
    """Reference: n_windows sequential fine windows, all snapshots kept."""
    traj = [w0]
    for _ in range(n_windows):
        traj.append(fine_propagate(traj[-1], m, dt_star))
    return traj


def _finish_run(
    variant: str,
    w0: WaveField,
    m: Medium,
    n_windows: int,
    iterations: int,
    dt_star: float,
    snaps: list[list[WaveField]],
    fine_apps: int,
    omegas: list[OrthogonalOperator] | None = None,
) -> PararealRun:
    reference = serial_fine_trajectory(w0, m, n_windows, dt_star)
    errors = np.zeros((len(snaps), n_windows + 1))
    for k, row in enumerate(snaps):
        for n, w in enumerate(row):
            errors[k, n] = rel_energy_error(w, reference[n], m.c)
    e0 = energy_norm(lambda_map(w0, m.c))
    unstable = False
    if e0 > 0:
        for row in snaps:
            for w in row:
                if energy_norm(lambda_map(w, m.c)) > BLOWUP_FACTOR * e0:
                    unstable = True
    return PararealRun(
        variant=variant,
        dt_star=dt_star,
        n_windows=n_windows,
        iterations=iterations,
        snapshots=snaps,
        errors=errors,
        unstable=unstable,
        fine_apps_per_iteration=fine_apps,
        omegas=omegas or [],
    )


def _run_with_fixed_coarse(
    variant: str,
    w0: WaveField,
    m: Medium,
    n_windows: int,
    iterations: int,
    dt_star: float,
    coarse_op: Callable[[WaveField], WaveField],
    workers: int,
) -> PararealRun:
    _check_run_args(w0, m, n_windows, iterations, dt_star)
    fine = lambda w: fine_propagate(w, m, dt_star)  # noqa: E731

    snaps = [[w0]]
    c_prev: list[WaveField] = []
    for n in range(n_windows):
        c = coarse_op(snaps[0][n])
        c_prev.append(c)
        snaps[0].append(c)

    for _ in range(iterations):
        prev_row = snaps[-1]
        f_vals = _parallel_map(fine, prev_row[:n_windows], workers)
        row = [w0]
        c_new_list: list[WaveField] = []
        for n in range(n_windows):
            c_new = coarse_op(row[n])
            c_new_list.append(c_new)
            # correction first: it cancels bitwise once iterates converge
            row.append(f_vals[n] + (c_new - c_prev[n]))
        c_prev = c_new_list
        snaps.append(row)

    return _finish_run(variant, w0, m, n_windows, iterations, dt_star, snaps, n_windows)


def parareal_plain(
    w0: WaveField,
    m: Medium,
    n_windows: int,
    iterations: int,
    dt_star: float,
    *,
    workers: int = 1,
    coarse_op: Callable[[WaveField], WaveField] | None = None,
) -> PararealRun:
    """Classic iteration with the interpolated coarse solver.

    coarse_op overrides the coarse estimator (testing hook; e.g. pass the
    fine solver itself to verify the corrections vanish).
    """
    op = coarse_op if coarse_op is not None else (lambda w: coarse_tilde(w, m, dt_star))
    return _run_with_fixed_coarse("plain", w0, m, n_windows, iterations, dt_star, op, workers)


def parareal_enhanced(
    w0: WaveField,
    m: Medium,
    n_windows: int,
    iterations: int,
    dt_star: float,
    net: JNet,
    *,
    workers: int = 1,
) -> PararealRun:
    """Parareal with the network-corrected coarse step, including at k=0."""
    op = lambda w: enhanced_step(w, m, net, dt_star)  # noqa: E731
    return _run_with_fixed_coarse("enhanced", w0, m, n_windows, iterations, dt_star, op, workers)


def parareal_procrustes(
    w0: WaveField,
    m: Medium,
    n_windows: int,
    iterations: int,
    dt_star: float,
    *,
    workers: int = 1,
    coarse_op: Callable[[WaveField], WaveField] | None = None,
) -> PararealRun:
    """Parareal with an online orthogonal correction of the coarse solver.

    At each iteration k the coarse and fine images of all current iterates
    are collected as columns (in energy variables, on the fine grid), the
    orthogonal Procrustes problem is solved, and the resulting Omega_k
    corrects the coarse estimator throughout sweep k+1. Initialization is
    the plain coarse sweep.
    """
    _check_run_args(w0, m, n_windows, iterations, dt_star)
    g_op = coarse_op if coarse_op is not None else (lambda w: coarse_tilde(w, m, dt_star))
    fine = lambda w: fine_propagate(w, m, dt_star)  # noqa: E731

    def corrected(omega: OrthogonalOperator, g_val: WaveField) -> WaveField:
        e = omega.apply_energy(lambda_map(g_val, m.c))
        return lambda_pinv(e, m.c, float(np.sum(g_val.u.values)))

    snaps = [[w0]]
    for n in range(n_windows):
        snaps[0].append(g_op(snaps[0][n]))

    omegas: list[OrthogonalOperator] = []
    for _ in range(iterations):
        prev_row = snaps[-1]
        f_vals = _parallel_map(fine, prev_row, workers)  # n = 0..N inclusive
        g_vals = [g_op(w) for w in prev_row]
        g_cols = np.stack([lambda_map(g, m.c).stack().ravel() for g in g_vals], axis=1)
        f_cols = np.stack([lambda_map(f, m.c).stack().ravel() for f in f_vals], axis=1)
        omega = procrustes_solve(g_cols, f_cols)
        omegas.append(omega)

        row = [w0]
        for n in range(n_windows):
            g_new = g_op(row[n])
            row.append(f_vals[n] + (corrected(omega, g_new) - corrected(omega, g_vals[n])))
        snaps.append(row)

    return _finish_run(
        "procrustes", w0, m, n_windows, iterations, dt_star, snaps,
        n_windows + 1, omegas,
    )
