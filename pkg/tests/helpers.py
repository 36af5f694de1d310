"""Brute-force oracles shared by the test suite.

Everything here is deliberately naive: double loops over grid nodes, direct
textbook formulas, no reuse of package internals beyond public data layouts.
Slow but obviously correct, which is the point of an oracle.
"""

import numpy as np

from parawave.grid import GridSpec, ScalarField, WaveField
from parawave.jnet import BN_EPS, backward, net_forward


# ---------------------------------------------------------------------------
# transfer operators

# full-weighting stencil: center 1/4, edges 1/8, corners 1/16
_RESTRICT_W = np.array(
    [
        [1.0 / 16, 1.0 / 8, 1.0 / 16],
        [1.0 / 8, 1.0 / 4, 1.0 / 8],
        [1.0 / 16, 1.0 / 8, 1.0 / 16],
    ]
)

_CUBIC_W = (-1.0 / 16, 9.0 / 16, 9.0 / 16, -1.0 / 16)


def naive_restrict(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    m = n // 2
    out = np.zeros((m, m))
    for iy in range(m):
        for ix in range(m):
            acc = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    acc += _RESTRICT_W[dy + 1, dx + 1] * a[(2 * iy + dy) % n, (2 * ix + dx) % n]
            out[iy, ix] = acc
    return out


def _naive_prolong_axis(a: np.ndarray) -> np.ndarray:
    # even fine nodes copy the coarse value; odd nodes take the 4-point cubic
    n = a.shape[0]
    out = np.zeros((2 * n,) + a.shape[1:])
    for i in range(n):
        out[2 * i] = a[i]
        out[2 * i + 1] = (
            _CUBIC_W[0] * a[(i - 1) % n]
            + _CUBIC_W[1] * a[i]
            + _CUBIC_W[2] * a[(i + 1) % n]
            + _CUBIC_W[3] * a[(i + 2) % n]
        )
    return out


def naive_prolong(a: np.ndarray) -> np.ndarray:
    return _naive_prolong_axis(_naive_prolong_axis(a).T).T


# ---------------------------------------------------------------------------
# stepping scheme

def naive_lap5(a: np.ndarray) -> np.ndarray:
    """Periodic 5-point Laplacian numerator (no 1/h^2)."""
    n = a.shape[0]
    out = np.zeros_like(a)
    for iy in range(n):
        for ix in range(n):
            out[iy, ix] = (
                a[(iy + 1) % n, ix]
                + a[(iy - 1) % n, ix]
                + a[iy, (ix + 1) % n]
                + a[iy, (ix - 1) % n]
                - 4.0 * a[iy, ix]
            )
    return out


def naive_verlet_step(u: np.ndarray, v: np.ndarray, c: np.ndarray, k: float, h: float):
    a = (c * c) / (h * h)
    lap_u = naive_lap5(u)
    u_new = u + k * v + 0.5 * k * k * a * lap_u
    v_new = v + 0.5 * k * a * (lap_u + naive_lap5(u_new))
    return u_new, v_new


def verlet_mode_matrix(c: float, kx: float, ky: float, k: float, h: float) -> np.ndarray:
    """One-step amplification matrix of the scheme on a single Fourier mode.

    The 5-point Laplacian acts on exp(i(kx x + ky y)) as multiplication by
    -(4 sin^2(kx h/2) + 4 sin^2(ky h/2)) / h^2, so the step reduces to a 2x2
    recurrence on the mode's (u, v) coefficient pair. det = 1 for any input.
    """
    s2 = 4.0 * np.sin(kx * h / 2.0) ** 2 + 4.0 * np.sin(ky * h / 2.0) ** 2
    a = -(c * c) * s2 / (h * h)
    kappa = 0.5 * k * k * a
    return np.array(
        [
            [1.0 + kappa, k],
            [0.5 * k * a * (2.0 + kappa), 1.0 + kappa],
        ]
    )


# ---------------------------------------------------------------------------
# energy

def naive_energy(qx: np.ndarray, qy: np.ndarray, p: np.ndarray, h: float) -> float:
    total = 0.0
    n = qx.shape[0]
    for iy in range(n):
        for ix in range(n):
            total += qx[iy, ix] ** 2 + qy[iy, ix] ** 2 + p[iy, ix] ** 2
    return total * h * h


# ---------------------------------------------------------------------------
# random fields

def random_values(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.standard_normal((n, n))


def band_limited_values(rng: np.random.Generator, n: int, k_max: int) -> np.ndarray:
    """Random real field with Fourier modes only at |mx|,|my| <= k_max."""
    spec = np.zeros((n, n), dtype=complex)
    freq = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    keep = np.abs(freq) <= k_max
    mask = np.outer(keep, keep)
    spec[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    out = np.fft.ifft2(spec).real
    scale = np.abs(out).max()
    return out / scale if scale > 0 else out


def drop_pure_nyquist(values: np.ndarray) -> np.ndarray:
    """Zero the unmatched modes (N,0), (0,N), (N,N), N = n/2.

    A real even-length FFT gives those modes no conjugate partner, so no
    real-valued spectral-gradient convention can carry them through a
    gradient/antigradient roundtrip.
    """
    n = values.shape[0]
    half = n // 2
    spec = np.fft.fft2(values)
    spec[half, 0] = 0.0
    spec[0, half] = 0.0
    spec[half, half] = 0.0
    return np.fft.ifft2(spec).real


def random_wave(grid: GridSpec, rng: np.random.Generator, k_max: int | None = None) -> WaveField:
    if k_max is None:
        u = random_values(rng, grid.n)
        v = random_values(rng, grid.n)
    else:
        u = band_limited_values(rng, grid.n, k_max)
        v = band_limited_values(rng, grid.n, k_max)
    return WaveField(ScalarField(grid, u), ScalarField(grid, v))


def random_orthogonal(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


# ---------------------------------------------------------------------------
# network oracle: straight-line forward pass, channels-first, one example

def naive_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    """Per-pixel periodic convolution; x (C,H,W), w (Co,Ci,k,k)."""
    co, ci, k, _ = w.shape
    _, hgt, wid = x.shape
    r = k // 2
    out = np.zeros((co, hgt, wid))
    for o in range(co):
        for iy in range(hgt):
            for ix in range(wid):
                acc = 0.0
                for i in range(ci):
                    for dy in range(k):
                        for dx in range(k):
                            acc += (
                                w[o, i, dy, dx]
                                * x[i, (iy + dy - r) % hgt, (ix + dx - r) % wid]
                            )
                out[o, iy, ix] = acc + (b[o] if b is not None else 0.0)
    return out


def naive_pool2(x: np.ndarray) -> np.ndarray:
    c, hgt, wid = x.shape
    out = np.zeros((c, hgt // 2, wid // 2))
    for ch in range(c):
        for iy in range(hgt // 2):
            for ix in range(wid // 2):
                out[ch, iy, ix] = 0.25 * (
                    x[ch, 2 * iy, 2 * ix]
                    + x[ch, 2 * iy, 2 * ix + 1]
                    + x[ch, 2 * iy + 1, 2 * ix]
                    + x[ch, 2 * iy + 1, 2 * ix + 1]
                )
    return out


def _naive_up_axis(x: np.ndarray, axis: int) -> np.ndarray:
    # factor-2 bilinear with half-cell-centered output samples: output node o
    # sits at source coordinate o/2 - 1/4, so the weights are always (1/4, 3/4)
    # or (3/4, 1/4) on the two nearest source nodes, with periodic wrap.
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    out = np.zeros((2 * n,) + x.shape[1:])
    for o in range(2 * n):
        s = o / 2.0 - 0.25
        lo = int(np.floor(s))
        frac = s - lo
        out[o] = (1.0 - frac) * x[lo % n] + frac * x[(lo + 1) % n]
    return np.moveaxis(out, 0, axis)


def naive_up2(x: np.ndarray) -> np.ndarray:
    """(C,H,W) -> (C,2H,2W) periodic bilinear."""
    return _naive_up_axis(_naive_up_axis(x, 1), 2)


def naive_net_forward(net, x: np.ndarray) -> np.ndarray:
    """Inference-mode forward for one (C,n,n) example, written from scratch.

    Walks the fixed layer sequence directly (two conv blocks per encoder
    level with pooling between levels, mirrored decoder with additive skips,
    one extra upsampling tail, 1x1 head, global interpolation skip) using
    only the naive primitives above.
    """
    cfg = net.config
    if cfg.skip_mode != "add":
        raise ValueError("oracle only covers additive skips")
    relu = cfg.activation == "relu"

    def block(name: str, h: np.ndarray, kernel: int, act: bool, bn: bool) -> np.ndarray:
        w = net.params[f"{name}.W"]
        assert w.shape[2] == kernel
        b = net.params.get(f"{name}.b") if cfg.use_bias else None
        z = naive_conv(h, w, b)
        if act and relu:
            z = np.where(z > 0.0, z, 0.0)
        if bn:
            rm = net.state[f"{name}.mean"][:, None, None]
            rv = net.state[f"{name}.var"][:, None, None]
            gamma = net.params[f"{name}.gamma"][:, None, None]
            beta = net.params[f"{name}.beta"][:, None, None]
            z = gamma * (z - rm) / np.sqrt(rv + BN_EPS) + beta
        return z

    bn = cfg.use_batchnorm
    k = cfg.kernel
    skips = []
    h = x
    for lv in range(cfg.levels):
        h = block(f"enc{lv}a", h, k, True, bn)
        h = block(f"enc{lv}b", h, k, True, bn)
        if lv < cfg.levels - 1:
            skips.append(h)
            h = naive_pool2(h)
    for lv in range(cfg.levels - 2, -1, -1):
        h = naive_up2(h)
        h = block(f"dec{lv}a", h, k, True, bn)
        h = h + skips[lv]
        h = block(f"dec{lv}b", h, k, True, bn)
    h = naive_up2(h)
    h = block("tail", h, k, True, bn)
    y = block("head", h, 1, False, False)
    return y + naive_up2(x[: cfg.out_channels])


# ---------------------------------------------------------------------------
# finite-difference gradient checking

def _loss_and_grad_entry(net, x, y, name: str, flat_idx: int):
    loss, grads, _ = backward(net, x, y)
    return loss, float(grads[name].flat[flat_idx])


def make_gradcheck_targets(net, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Targets near the current outputs keep the quadratic loss small, so the
    finite-difference curvature term stays far below the tolerance."""
    y = net_forward(net, x, training=True)
    return y + 0.3 * rng.standard_normal(y.shape)


def gradcheck(
    net,
    x: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    n_checks: int = 100,
    eps: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    skip_kinks: bool = False,
) -> int:
    """Compare analytic gradients against central differences.

    Perturbs n_checks randomly chosen parameter entries by +-eps and checks
    |fd - analytic| <= atol + rtol * max(|fd|, |analytic|). With
    skip_kinks=True (ReLU nets), draws where the analytic gradient itself
    jumps between p-eps and p+eps are resampled: a ReLU kink inside the
    stencil makes the central difference measure the wrong one-sided slope,
    which is a property of the probe, not of the gradient. Returns the
    number of entries actually checked.
    """
    _, grads, _ = backward(net, x, y)
    names = sorted(net.params)
    sizes = np.array([net.params[k].size for k in names], dtype=float)
    weights = sizes / sizes.sum()

    checked = 0
    attempts = 0
    max_attempts = 40 * n_checks
    while checked < n_checks:
        attempts += 1
        assert attempts < max_attempts, "too many kink rejections; suspicious gradients"
        name = names[rng.choice(len(names), p=weights)]
        idx = int(rng.integers(net.params[name].size))
        analytic = float(grads[name].flat[idx])
        orig = float(net.params[name].flat[idx])

        net.params[name].flat[idx] = orig + eps
        loss_hi, g_hi = _loss_and_grad_entry(net, x, y, name, idx)
        net.params[name].flat[idx] = orig - eps
        loss_lo, g_lo = _loss_and_grad_entry(net, x, y, name, idx)
        net.params[name].flat[idx] = orig

        if skip_kinks and abs(g_hi - g_lo) > 1e-3 * (abs(g_hi) + abs(g_lo) + 1e-12):
            continue
        fd = (loss_hi - loss_lo) / (2.0 * eps)
        tol = atol + rtol * max(abs(fd), abs(analytic))
        assert abs(fd - analytic) <= tol, (
            f"{name}[{idx}]: fd={fd:.10g} analytic={analytic:.10g} "
            f"diff={abs(fd - analytic):.3g} tol={tol:.3g}"
        )
        checked += 1
    return checked


# ---------------------------------------------------------------------------
# small-matrix helpers

def best_rotation_angle(g_mat: np.ndarray, f_mat: np.ndarray, grid_points: int = 3600) -> float:
    """Grid search over 2D rotation angles minimizing ||R(t)G - F||_F."""
    best_t, best_obj = 0.0, np.inf
    for t in np.linspace(0.0, 2.0 * np.pi, grid_points, endpoint=False):
        rot = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
        obj = np.linalg.norm(rot @ g_mat - f_mat)
        if obj < best_obj:
            best_t, best_obj = t, obj
    return best_t
