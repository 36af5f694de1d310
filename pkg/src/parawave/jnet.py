"""Encoder-decoder correction network with hand-written gradients.

The network maps a 4-channel coarse tensor (qx, qy, p, c) on an n x n grid
to a 3-channel tensor (qx, qy, p) on the 2n x 2n grid. Architecture:

  encoder   per level: two conv blocks, then 2x2 average pooling
            (levels - 1 pools, so the bottom runs at n / 2^(levels-1))
  decoder   per level: 2x bilinear upsampling, conv block, skip join with
            the same-resolution encoder output, conv block
  tail      one more upsampling past the input resolution (n -> 2n) plus a
            conv block, then a 1x1 readout to 3 channels
  skips     additive by default (the correction is a near-identity map);
            channel concatenation available as a config option
  global    the bilinearly upsampled (qx, qy, p) input channels are added
            to the output

A conv block is conv(periodic padding) -> activation -> batch norm. The
"linear" variant replaces ReLU by the identity and drops biases and batch
norm entirely, making the whole network an exactly linear map.

Everything is float64. Activations are channels-last internally; the
public entry points take and return the (channels, rows, cols) layout used
elsewhere in the package. The 3x3 convolutions run through a small
compiled kernel when the optional C extension built; a pure numpy im2col
path computes the same thing otherwise. Batch norm during training uses
fixed micro-shards of BN_SHARD examples: gradients and batch statistics
are computed shard by shard and folded in shard order, so results are
bitwise identical no matter how many worker threads evaluate the shards.
"""

from __future__ import annotations

import ctypes
import importlib.util
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .energy import EnergyField, energy_norm, lambda_map, lambda_pinv
from .errors import ConfigError, DomainError, FormatError, NumericError, ShapeError
from .fileio import expect_magic, read_exact, read_f64, read_struct, write_f64
from .grid import WaveField, restrict_wave
from .solver import Medium, coarse_propagate, fine_propagate

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
BN_SHARD = 16
WIDTH_CAP_FACTOR = 8

ACTIVATIONS = ("relu", "identity")
SKIP_MODES = ("add", "concat")

CHECKPOINT_MAGIC = b"PWNN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class JNetConfig:
    levels: int = 3
    base_channels: int = 16
    kernel: int = 3
    activation: str = "relu"
    use_bias: bool = True
    use_batchnorm: bool = True
    skip_mode: str = "add"
    input_n: int = 64
    in_channels: int = 4
    out_channels: int = 3

    def __post_init__(self) -> None:
        if self.levels < 2:
            raise ConfigError(f"need at least 2 levels, got {self.levels}")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be positive")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"kernel must be odd, got {self.kernel}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.skip_mode not in SKIP_MODES:
            raise ConfigError(f"unknown skip_mode {self.skip_mode!r}")
        if self.activation == "identity" and (self.use_bias or self.use_batchnorm):
            raise ConfigError("the linear variant requires use_bias=False and use_batchnorm=False")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be positive")
        floor = 1 << (self.levels - 1)
        if self.input_n < 2 or self.input_n % floor != 0:
            raise ConfigError(
                f"input_n={self.input_n} not divisible by 2^(levels-1)={floor}"
            )

    def width(self, level: int) -> int:
        return min(self.base_channels << level, WIDTH_CAP_FACTOR * self.base_channels)

    @property
    def output_n(self) -> int:
        return 2 * self.input_n


@dataclass(frozen=True)
class _BlockSpec:
    name: str
    cin: int
    cout: int
    kernel: int
    act: bool
    bn: bool


def block_specs(cfg: JNetConfig) -> list[_BlockSpec]:
    """Conv blocks in declaration (parameter/file) order."""
    blocks: list[_BlockSpec] = []
    k, bn = cfg.kernel, cfg.use_batchnorm
    prev = cfg.in_channels
    for lv in range(cfg.levels):
        w = cfg.width(lv)
        blocks.append(_BlockSpec(f"enc{lv}a", prev, w, k, True, bn))
        blocks.append(_BlockSpec(f"enc{lv}b", w, w, k, True, bn))
        prev = w
    for lv in range(cfg.levels - 2, -1, -1):
        w = cfg.width(lv)
        blocks.append(_BlockSpec(f"dec{lv}a", cfg.width(lv + 1), w, k, True, bn))
        cin_b = 2 * w if cfg.skip_mode == "concat" else w
        blocks.append(_BlockSpec(f"dec{lv}b", cin_b, w, k, True, bn))
    w0 = cfg.width(0)
    blocks.append(_BlockSpec("tail", w0, w0, k, True, bn))
    blocks.append(_BlockSpec("head", w0, cfg.out_channels, 1, False, False))
    return blocks


def param_layout(cfg: JNetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Trainable tensors in declaration order: W, b, gamma, beta per block."""
    layout: list[tuple[str, tuple[int, ...]]] = []
    for blk in block_specs(cfg):
        layout.append((f"{blk.name}.W", (blk.cout, blk.cin, blk.kernel, blk.kernel)))
        if cfg.use_bias:
            layout.append((f"{blk.name}.b", (blk.cout,)))
        if blk.bn:
            layout.append((f"{blk.name}.gamma", (blk.cout,)))
            layout.append((f"{blk.name}.beta", (blk.cout,)))
    return layout


def state_layout(cfg: JNetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Batch-norm running statistics, in declaration order."""
    layout: list[tuple[str, tuple[int, ...]]] = []
    for blk in block_specs(cfg):
        if blk.bn:
            layout.append((f"{blk.name}.mean", (blk.cout,)))
            layout.append((f"{blk.name}.var", (blk.cout,)))
    return layout


def init_params(cfg: JNetConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Kernels and biases ~ Uniform(+-1/sqrt(fan_in)); BN scale 1, shift 0."""
    params: dict[str, np.ndarray] = {}
    for blk in block_specs(cfg):
        fan_in = blk.cin * blk.kernel * blk.kernel
        bound = 1.0 / math.sqrt(fan_in)
        shape = (blk.cout, blk.cin, blk.kernel, blk.kernel)
        params[f"{blk.name}.W"] = rng.uniform(-bound, bound, size=shape)
        if cfg.use_bias:
            params[f"{blk.name}.b"] = rng.uniform(-bound, bound, size=(blk.cout,))
        if blk.bn:
            params[f"{blk.name}.gamma"] = np.ones(blk.cout)
            params[f"{blk.name}.beta"] = np.zeros(blk.cout)
    return params


def init_state(cfg: JNetConfig) -> dict[str, np.ndarray]:
    state: dict[str, np.ndarray] = {}
    for name, shape in state_layout(cfg):
        state[name] = np.ones(shape) if name.endswith(".var") else np.zeros(shape)
    return state


@dataclass
class JNet:
    """Parameter bundle: config, trainable tensors, BN running stats, and
    the coarse step length the network was trained for (None = untrained)."""

    config: JNetConfig
    params: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    dt_star: float | None = None

    @classmethod
    def init(
        cls, cfg: JNetConfig, rng: np.random.Generator, dt_star: float | None = None
    ) -> "JNet":
        return cls(cfg, init_params(cfg, rng), init_state(cfg), dt_star)

    def copy(self) -> "JNet":
        return JNet(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.state.items()},
            self.dt_star,
        )


def n_parameters(net: JNet) -> int:
    return sum(t.size for t in net.params.values())


# ---------------------------------------------------------------------------
# primitive ops


def _pad_wrap(xl: np.ndarray, r: int) -> np.ndarray:
    if r == 0:
        return xl
    return np.pad(xl, ((0, 0), (r, r), (r, r), (0, 0)), mode="wrap")


def _load_native_convops():
    """Bind conv3/conv3_dw from the optional compiled extension.

    The extension is a plain shared library (no Python C API), so it is
    loaded through ctypes. Returns (None, None) when it is absent or
    unusable; callers then take the numpy path.
    """
    candidates: list[str] = []
    try:
        spec = importlib.util.find_spec("parawave._convops")
        if spec is not None and spec.origin:
            candidates.append(spec.origin)
    except (ImportError, ValueError):  # pragma: no cover
        pass
    here = Path(__file__).resolve().parent
    candidates.extend(str(p) for p in sorted(here.glob("_convops*.so")))
    for cand in candidates:
        if not cand.endswith((".so", ".dylib", ".pyd")):
            continue
        try:
            lib = ctypes.CDLL(cand)
            fwd, dwk = lib.conv3, lib.conv3_dw
        except (OSError, AttributeError):  # pragma: no cover
            continue
        sig = [ctypes.c_void_p] * 3 + [ctypes.c_long] * 5
        fwd.argtypes = sig
        fwd.restype = None
        dwk.argtypes = sig
        dwk.restype = None
        return fwd, dwk
    return None, None


_conv3_native, _conv3_dw_native = _load_native_convops()


def _im2col(xl: np.ndarray, k: int) -> np.ndarray:
    """Unfold channels-last xl (B,H,W,C) into (B,H,W,k,k,C) with periodic
    wrap, window rows/cols in kernel order."""
    B, H, Wd, C = xl.shape
    r = k // 2
    if r == 0:
        return xl.reshape(B, H, Wd, 1, 1, C)
    xp = _pad_wrap(xl, r)
    cols = np.empty((B, H, Wd, k, k, C))
    for ky in range(k):
        for kx in range(k):
            cols[:, :, :, ky, kx, :] = xp[:, ky : ky + H, kx : kx + Wd, :]
    return cols


def _col2im(dcols: np.ndarray, k: int) -> np.ndarray:
    """Adjoint of _im2col: fold (B,H,W,k,k,C) back to (B,H,W,C), wrapping
    the halo contributions periodically."""
    B, H, Wd, _, _, C = dcols.shape
    r = k // 2
    if r == 0:
        return dcols.reshape(B, H, Wd, C)
    dp = np.zeros((B, H + 2 * r, Wd + 2 * r, C))
    for ky in range(k):
        for kx in range(k):
            dp[:, ky : ky + H, kx : kx + Wd, :] += dcols[:, :, :, ky, kx, :]
    dp[:, -2 * r : -r] += dp[:, :r]
    dp[:, r : 2 * r] += dp[:, -r:]
    dp[:, :, -2 * r : -r] += dp[:, :, :r]
    dp[:, :, r : 2 * r] += dp[:, :, -r:]
    return dp[:, r : r + H, r : r + Wd]


def _conv_batch_step(per_example_cols: int) -> int:
    # keep the unfolded column block near 128 MB
    return max(1, int(16_000_000 // max(per_example_cols, 1)))


def _conv_forward(
    xl: np.ndarray, W: np.ndarray, b: np.ndarray | None, keep_cols: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray | None]:
    """Periodic cross-correlation; xl (B,H,W,Ci) channels-last, W (Co,Ci,k,k).

    3x3 kernels go through the compiled extension when it loaded. The numpy
    path unfolds shifted windows (im2col) and runs one matrix product per
    batch chunk; the chunk size depends only on shapes, so the summation
    order is reproducible. With keep_cols the unfolded block is also
    returned for reuse in the backward pass (native path returns None, the
    backward there rebuilds its padded input instead).
    """
    B, H, Wd, C = xl.shape
    Co, _, k, _ = W.shape
    kk = k * k
    if _conv3_native is not None and k == 3:
        xp = _pad_wrap(xl, 1)
        wm = np.ascontiguousarray(W.transpose(2, 3, 1, 0))
        out = np.empty((B, H, Wd, Co))
        _conv3_native(xp.ctypes.data, wm.ctypes.data, out.ctypes.data, B, H, Wd, C, Co)
        if b is not None:
            out += b
        return (out, None) if keep_cols else out
    wmat = W.transpose(2, 3, 1, 0).reshape(kk * C, Co)
    if keep_cols:
        cols = _im2col(xl, k)
        out = (cols.reshape(-1, kk * C) @ wmat).reshape(B, H, Wd, Co)
        if b is not None:
            out += b
        return out, cols
    out = np.empty((B, H, Wd, Co))
    step = _conv_batch_step(H * Wd * kk * C)
    for i in range(0, B, step):
        cols = _im2col(xl[i : i + step], k).reshape(-1, kk * C)
        out[i : i + step] = (cols @ wmat).reshape(-1, H, Wd, Co)
    if b is not None:
        out += b
    return out


def _conv_backward(
    xl: np.ndarray,
    W: np.ndarray,
    dl: np.ndarray,
    want_bias: bool,
    cols: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Gradients of _conv_forward; dl (B,H,W,Co) channels-last.

    Returns (dx, dW, db) with dx channels-last and dW in the parameter
    layout (Co,Ci,k,k).
    """
    B, H, Wd, C = xl.shape
    Co, _, k, _ = W.shape
    kk = k * k
    if _conv3_native is not None and k == 3:
        dl = np.ascontiguousarray(dl)
        xp = _pad_wrap(xl, 1)
        dw = np.zeros((3, 3, C, Co))
        _conv3_dw_native(xp.ctypes.data, dl.ctypes.data, dw.ctypes.data, B, H, Wd, C, Co)
        dW = np.ascontiguousarray(dw.transpose(3, 2, 0, 1))
        db = dl.sum(axis=(0, 1, 2)) if want_bias else None
        # dx is the correlation of dout with the index-flipped kernel
        wb = np.ascontiguousarray(W.transpose(2, 3, 0, 1)[::-1, ::-1])
        dxl = np.empty((B, H, Wd, C))
        dlp = _pad_wrap(dl, 1)
        _conv3_native(dlp.ctypes.data, wb.ctypes.data, dxl.ctypes.data, B, H, Wd, Co, C)
        return dxl, dW, db
    wmat = W.transpose(2, 3, 1, 0).reshape(kk * C, Co)
    if cols is not None:
        dl2 = dl.reshape(-1, Co)
        dw_mat = cols.reshape(-1, kk * C).T @ dl2
        db = dl2.sum(axis=0) if want_bias else None
        dcols = (dl2 @ wmat.T).reshape(B, H, Wd, k, k, C)
        dW = np.ascontiguousarray(dw_mat.reshape(k, k, C, Co).transpose(3, 2, 0, 1))
        return _col2im(dcols, k), dW, db
    dw_mat = np.zeros((kk * C, Co))
    db = np.zeros(Co) if want_bias else None
    dxl = np.empty((B, H, Wd, C))
    step = _conv_batch_step(H * Wd * kk * C)
    for i in range(0, B, step):
        part = _im2col(xl[i : i + step], k).reshape(-1, kk * C)
        dl2 = dl[i : i + step].reshape(-1, Co)
        dw_mat += part.T @ dl2
        if want_bias:
            db += dl2.sum(axis=0)
        dcols = (dl2 @ wmat.T).reshape(-1, H, Wd, k, k, C)
        dxl[i : i + step] = _col2im(dcols, k)
    dW = np.ascontiguousarray(dw_mat.reshape(k, k, C, Co).transpose(3, 2, 0, 1))
    return dxl, dW, db


def _pool2(x: np.ndarray) -> np.ndarray:
    B, H, Wd, C = x.shape
    return x.reshape(B, H // 2, 2, Wd // 2, 2, C).mean(axis=(2, 4))


def _pool2_backward(dout: np.ndarray) -> np.ndarray:
    B, H2, W2, C = dout.shape
    out = np.empty((B, 2 * H2, 2 * W2, C))
    out.reshape(B, H2, 2, W2, 2, C)[:] = (0.25 * dout)[:, :, None, :, None, :]
    return out


def _axslice(nd: int, axis: int, s: slice) -> tuple:
    ix = [slice(None)] * nd
    ix[axis] = s
    return tuple(ix)


def _up_axis(x: np.ndarray, axis: int) -> np.ndarray:
    # out[2i] = 0.75 x[i] + 0.25 x[i-1]; out[2i+1] = 0.75 x[i] + 0.25 x[i+1]
    nd = x.ndim
    shape = list(x.shape)
    shape[axis] *= 2
    out = np.empty(shape)
    ev = out[_axslice(nd, axis, slice(0, None, 2))]
    od = out[_axslice(nd, axis, slice(1, None, 2))]
    near = 0.75 * x
    far = 0.25 * x
    ev[...] = near
    od[...] = near
    ev[_axslice(nd, axis, slice(1, None))] += far[_axslice(nd, axis, slice(None, -1))]
    ev[_axslice(nd, axis, slice(0, 1))] += far[_axslice(nd, axis, slice(-1, None))]
    od[_axslice(nd, axis, slice(None, -1))] += far[_axslice(nd, axis, slice(1, None))]
    od[_axslice(nd, axis, slice(-1, None))] += far[_axslice(nd, axis, slice(0, 1))]
    return out


def _up_axis_backward(g: np.ndarray, axis: int) -> np.ndarray:
    nd = g.ndim
    ge = g[_axslice(nd, axis, slice(0, None, 2))]
    go = g[_axslice(nd, axis, slice(1, None, 2))]
    out = 0.75 * (ge + go)
    qe = 0.25 * ge
    qo = 0.25 * go
    # adjoint wrap: out[i] += 0.25 ge[i+1] and 0.25 go[i-1], periodically
    out[_axslice(nd, axis, slice(None, -1))] += qe[_axslice(nd, axis, slice(1, None))]
    out[_axslice(nd, axis, slice(-1, None))] += qe[_axslice(nd, axis, slice(0, 1))]
    out[_axslice(nd, axis, slice(1, None))] += qo[_axslice(nd, axis, slice(None, -1))]
    out[_axslice(nd, axis, slice(0, 1))] += qo[_axslice(nd, axis, slice(-1, None))]
    return out


def _up2(x: np.ndarray) -> np.ndarray:
    """Periodic bilinear 2x upsampling on (B,H,W,C), cell-centered grids."""
    return _up_axis(_up_axis(x, 1), 2)


def _up2_backward(g: np.ndarray) -> np.ndarray:
    return _up_axis_backward(_up_axis_backward(g, 2), 1)


def upsample_values(x: np.ndarray) -> np.ndarray:
    """Public bilinear 2x upsampling for bare (C,H,W) or (H,W) arrays."""
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    out = _up_axis(_up_axis(arr, 1), 2)
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# forward / backward over the block graph (all channels-last)


def _block_forward(cfg, params, state, blk, x, training, cache, stats):
    W = params[f"{blk.name}.W"]
    b = params.get(f"{blk.name}.b") if cfg.use_bias else None
    if cache is not None:
        z, cols = _conv_forward(x, W, b, keep_cols=True)
    else:
        z, cols = _conv_forward(x, W, b), None
    mask = None
    h = z
    if blk.act and cfg.activation == "relu":
        if cache is not None:
            mask = z > 0
        h = np.maximum(z, 0.0)
    if blk.bn:
        gamma = params[f"{blk.name}.gamma"]
        beta = params[f"{blk.name}.beta"]
        if training:
            count = h.shape[0] * h.shape[1] * h.shape[2]
            mean = h.mean(axis=(0, 1, 2))
            # one-pass variance; activations are O(1) so no cancellation risk
            var = np.einsum("bijc,bijc->c", h, h) / count - mean * mean
            np.maximum(var, 0.0, out=var)
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = h - mean
            xhat *= inv
            out = gamma * xhat
            out += beta
            if stats is not None:
                stats.append((blk.name, mean, var, count))
            if cache is not None:
                cache[blk.name] = (x, cols, mask, xhat, inv)
            return out
        rm = state[f"{blk.name}.mean"]
        rv = state[f"{blk.name}.var"]
        inv = 1.0 / np.sqrt(rv + BN_EPS)
        return (gamma * inv) * h + (beta - gamma * rm * inv)
    if cache is not None:
        cache[blk.name] = (x, cols, mask, None, None)
    return h


def _block_backward(cfg, params, blk, dout, cache, grads):
    x, cols, mask, xhat, inv = cache[blk.name]
    if blk.bn:
        gamma = params[f"{blk.name}.gamma"]
        count = dout.shape[0] * dout.shape[1] * dout.shape[2]
        g_beta = dout.sum(axis=(0, 1, 2))
        g_gamma = np.einsum("bijc,bijc->c", dout, xhat)
        grads[f"{blk.name}.beta"] = g_beta
        grads[f"{blk.name}.gamma"] = g_gamma
        dh = dout - g_beta / count
        dh -= xhat * (g_gamma / count)
        dh *= gamma * inv
        if mask is not None:
            dh *= mask
        dout = dh
    elif mask is not None:
        # dout may alias a stashed skip gradient; do not mutate it
        dout = dout * mask
    dxin, dW, db = _conv_backward(x, params[f"{blk.name}.W"], dout, cfg.use_bias, cols)
    grads[f"{blk.name}.W"] = dW
    if db is not None:
        grads[f"{blk.name}.b"] = db
    del cache[blk.name]
    return dxin


def _check_input(cfg: JNetConfig, x: np.ndarray) -> None:
    if x.shape[1:] != (cfg.in_channels, cfg.input_n, cfg.input_n):
        raise ShapeError(
            f"expected input (*, {cfg.in_channels}, {cfg.input_n}, {cfg.input_n}), "
            f"got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in network input")


def _check_params(net: JNet) -> None:
    for name, t in net.params.items():
        if not np.all(np.isfinite(t)):
            raise NumericError(f"non-finite weights in {name}")


def _forward_graph(cfg, params, state, x, training, cache, stats):
    blocks = {blk.name: blk for blk in block_specs(cfg)}
    skips = []
    h = x
    for lv in range(cfg.levels):
        h = _block_forward(cfg, params, state, blocks[f"enc{lv}a"], h, training, cache, stats)
        h = _block_forward(cfg, params, state, blocks[f"enc{lv}b"], h, training, cache, stats)
        if lv < cfg.levels - 1:
            skips.append(h)
            h = _pool2(h)
    for lv in range(cfg.levels - 2, -1, -1):
        h = _up2(h)
        h = _block_forward(cfg, params, state, blocks[f"dec{lv}a"], h, training, cache, stats)
        if cfg.skip_mode == "add":
            h = h + skips[lv]
        else:
            h = np.concatenate((h, skips[lv]), axis=3)
        h = _block_forward(cfg, params, state, blocks[f"dec{lv}b"], h, training, cache, stats)
    h = _up2(h)
    h = _block_forward(cfg, params, state, blocks["tail"], h, training, cache, stats)
    y = _block_forward(cfg, params, state, blocks["head"], h, training, cache, stats)
    return y + _up2(x[..., : cfg.out_channels])


def _backward_graph(cfg, params, dy, cache):
    blocks = {blk.name: blk for blk in block_specs(cfg)}
    grads: dict[str, np.ndarray] = {}
    d = _block_backward(cfg, params, blocks["head"], dy, cache, grads)
    d = _block_backward(cfg, params, blocks["tail"], d, cache, grads)
    d = _up2_backward(d)
    d_skips: dict[int, np.ndarray] = {}
    for lv in range(cfg.levels - 1):
        d = _block_backward(cfg, params, blocks[f"dec{lv}b"], d, cache, grads)
        if cfg.skip_mode == "add":
            d_skips[lv] = d
            da = d
        else:
            w = cfg.width(lv)
            da = d[..., :w]
            d_skips[lv] = d[..., w:]
        d = _block_backward(cfg, params, blocks[f"dec{lv}a"], da, cache, grads)
        d = _up2_backward(d)
    for lv in range(cfg.levels - 1, -1, -1):
        if lv < cfg.levels - 1:
            d = _pool2_backward(d) + d_skips[lv]
        d = _block_backward(cfg, params, blocks[f"enc{lv}b"], d, cache, grads)
        d = _block_backward(cfg, params, blocks[f"enc{lv}a"], d, cache, grads)
    return grads


def net_forward(net: JNet, x: np.ndarray, training: bool = False) -> np.ndarray:
    """Inference-mode forward pass. Accepts (C,n,n) or batched (B,C,n,n).

    training=True uses whole-input batch statistics in the batch-norm layers
    (useful for single-shard checks); the training loop itself goes through
    backward(), which shards.
    """
    _check_params(net)
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    _check_input(net.config, arr)
    xl = np.ascontiguousarray(arr.transpose(0, 2, 3, 1))
    yl = _forward_graph(net.config, net.params, net.state, xl, training, None, None)
    y = np.ascontiguousarray(yl.transpose(0, 3, 1, 2))
    return y[0] if single else y


def _shard_loss_grads(net, x, y):
    cfg = net.config
    cache: dict[str, tuple] = {}
    stats: list[tuple] = []
    diff = _forward_graph(cfg, net.params, net.state, x, True, cache, stats)
    diff -= y
    loss_sum = float(np.einsum("bijc,bijc->", diff, diff))
    diff *= 2.0
    grads = _backward_graph(cfg, net.params, diff, cache)
    return loss_sum, grads, stats


def backward(
    net: JNet, x: np.ndarray, y: np.ndarray, workers: int = 1
) -> tuple[float, dict[str, np.ndarray], list[tuple]]:
    """Loss and exact parameter gradients over a batch.

    loss = mean over examples of the summed squared output error. Returns
    (loss, grads, bn_stats): bn_stats holds per-shard batch-norm statistics
    in shard order for the running-average update. The batch is processed
    in fixed shards of BN_SHARD examples and all reductions fold in shard
    order, so the result is independent of `workers`.
    """
    _check_params(net)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 4 or y.ndim != 4 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ShapeError(f"need matching nonempty batches, got {x.shape} and {y.shape}")
    cfg = net.config
    _check_input(cfg, x)
    if y.shape[1:] != (cfg.out_channels, cfg.output_n, cfg.output_n):
        raise ShapeError(f"bad target shape {y.shape}")
    xl = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    yl = np.ascontiguousarray(y.transpose(0, 2, 3, 1))
    batch = x.shape[0]
    edges = list(range(0, batch, BN_SHARD)) + [batch]
    shards = [(xl[a:b], yl[a:b]) for a, b in zip(edges[:-1], edges[1:])]

    if workers > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _shard_loss_grads(net, *s), shards))
    else:
        results = [_shard_loss_grads(net, *s) for s in shards]

    loss_total = 0.0
    grads: dict[str, np.ndarray] | None = None
    bn_stats: list[tuple] = []
    for loss_sum, g, stats in results:  # fold strictly in shard order
        loss_total += loss_sum
        if grads is None:
            grads = g
        else:
            for key in grads:
                grads[key] += g[key]
        bn_stats.extend(stats)
    assert grads is not None
    inv_b = 1.0 / batch
    for key in grads:
        grads[key] *= inv_b
    return loss_total * inv_b, grads, bn_stats


def apply_bn_stats(state: dict[str, np.ndarray], bn_stats: list[tuple]) -> dict[str, np.ndarray]:
    """Fold per-shard batch statistics into running statistics, in order.

    Running update per shard: r <- (1 - m) r + m s, with the unbiased
    variance (matching the usual inference-time convention).
    """
    out = {k: v.copy() for k, v in state.items()}
    for name, mean, var, count in bn_stats:
        unbiased = var * (count / (count - 1.0)) if count > 1 else var
        out[f"{name}.mean"] = (1.0 - BN_MOMENTUM) * out[f"{name}.mean"] + BN_MOMENTUM * mean
        out[f"{name}.var"] = (1.0 - BN_MOMENTUM) * out[f"{name}.var"] + BN_MOMENTUM * unbiased
    return out


# ---------------------------------------------------------------------------
# the enhanced coarse step


def coarse_input_tensor(g: WaveField, m: Medium) -> np.ndarray:
    """Stack (qx, qy, p, c) for a coarse-grid field: the network input."""
    e = lambda_map(g, m.c_coarse)
    return np.concatenate((e.stack(), m.c_coarse.values[None]), axis=0)


def enhanced_step(w: WaveField, m: Medium, net: JNet, dt_star: float) -> WaveField:
    """Network-corrected coarse step on the fine grid.

    Restricts, advances with the coarse solver, maps to energetic variables
    plus the wave speed channel, applies the network, and reconstructs a
    fine-grid wave field. The reconstruction constant is the discrete sum of
    the coarse step's displacement (the mean is invisible to every energy
    metric; see lambda_pinv).
    """
    if net.dt_star is not None and abs(net.dt_star - dt_star) > 1e-12:
        raise ConfigError(
            f"network was trained for dt_star={net.dt_star}, asked for {dt_star}"
        )
    if w.grid != m.c.grid:
        raise ShapeError("enhanced_step expects a fine-grid field")
    if net.config.input_n != m.c_coarse.grid.n:
        raise ConfigError(
            f"network input resolution {net.config.input_n} does not match "
            f"the coarse grid {m.c_coarse.grid.n}"
        )
    g = coarse_propagate(restrict_wave(w), m, dt_star)
    x = coarse_input_tensor(g, m)
    y = net_forward(net, x)
    e = EnergyField.from_stack(m.c.grid, y)
    c0 = float(np.sum(g.u.values))
    return lambda_pinv(e, m.c, c0)


def zero_kernel_net(
    cfg: JNetConfig | None = None, dt_star: float | None = None
) -> JNet:
    """Baseline network with every kernel and bias zeroed.

    Its forward pass reduces to the bilinear interpolation skip, so the
    corrected coarse step degenerates to plain interpolation. Useful as the
    no-learning reference in evaluation sweeps.
    """
    net = JNet.init(cfg if cfg is not None else JNetConfig(), np.random.default_rng(0), dt_star)
    for name, tensor in net.params.items():
        if name.endswith(".W") or name.endswith(".b"):
            net.params[name] = np.zeros_like(tensor)
    return net


def eval_step_error(net: JNet, m: Medium, w: WaveField, dt_star: float) -> float:
    """One-window error of the corrected coarse step, in energy variables.

    Ratio of the energy of (network output - fine-step energy image) to the
    energy of the fine-step image, both windows started from w.
    """
    if net.dt_star is not None and abs(net.dt_star - dt_star) > 1e-12:
        raise ConfigError(
            f"network was trained for dt_star={net.dt_star}, asked for {dt_star}"
        )
    g = coarse_propagate(restrict_wave(w), m, dt_star)
    y = net_forward(net, coarse_input_tensor(g, m))
    ref = lambda_map(fine_propagate(w, m, dt_star), m.c)
    denom = energy_norm(ref)
    if denom == 0.0:
        raise DomainError("reference field carries no energy")
    diff = EnergyField.from_stack(m.c.grid, y - ref.stack())
    return energy_norm(diff) / denom


def phantom_energy(net: JNet, m: Medium) -> float:
    """Energy the network fabricates from a zero wave field.

    Runs the network on (0, 0, 0, c), reconstructs a wave field, and
    measures its discrete energy: a diagnostic of learned bias. Nonzero in
    general for both variants because the wave-speed channel still feeds
    the convolutions; exactly zero only when every kernel is zero.
    """
    cfg = net.config
    x = np.zeros((cfg.in_channels, cfg.input_n, cfg.input_n))
    x[3] = m.c_coarse.values
    y = net_forward(net, x)
    e = EnergyField.from_stack(m.c.grid, y)
    w = lambda_pinv(e, m.c, 0.0)
    return energy_norm(lambda_map(w, m.c))


# ---------------------------------------------------------------------------
# checkpoint format (PWNN)

_ACT_CODE = {"relu": 0, "identity": 1}
_SKIP_CODE = {"add": 0, "concat": 1}
_ACT_NAME = {v: k for k, v in _ACT_CODE.items()}
_SKIP_NAME = {v: k for k, v in _SKIP_CODE.items()}


def save_net(net: JNet, path: str | Path) -> None:
    cfg = net.config
    dt = float("nan") if net.dt_star is None else float(net.dt_star)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(
            struct.pack(
                "<10I",
                cfg.levels,
                cfg.base_channels,
                cfg.kernel,
                _ACT_CODE[cfg.activation],
                int(cfg.use_bias),
                int(cfg.use_batchnorm),
                _SKIP_CODE[cfg.skip_mode],
                cfg.input_n,
                cfg.in_channels,
                cfg.out_channels,
            )
        )
        f.write(struct.pack("<d", dt))
        names = [n for n, _ in param_layout(cfg)] + [n for n, _ in state_layout(cfg)]
        f.write(struct.pack("<Q", len(names)))
        for name in names:
            tensor = net.params[name] if name in net.params else net.state[name]
            raw = name.encode()
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", tensor.ndim))
            f.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            write_f64(f, tensor)


def load_net(path: str | Path) -> JNet:
    with open(path, "rb") as f:
        expect_magic(f, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        (levels, base, kernel, act, bias, bn, skip, input_n, cin, cout) = read_struct(
            f, "<10I", "config"
        )
        if act not in _ACT_NAME or skip not in _SKIP_NAME:
            raise FormatError(f"bad activation/skip codes {act}/{skip}")
        (dt,) = read_struct(f, "<d", "dt_star")
        try:
            cfg = JNetConfig(
                levels=levels,
                base_channels=base,
                kernel=kernel,
                activation=_ACT_NAME[act],
                use_bias=bool(bias),
                use_batchnorm=bool(bn),
                skip_mode=_SKIP_NAME[skip],
                input_n=input_n,
                in_channels=cin,
                out_channels=cout,
            )
        except ConfigError as exc:
            raise FormatError(f"checkpoint config invalid: {exc}") from exc
        expected = dict(param_layout(cfg)) | dict(state_layout(cfg))
        (count,) = read_struct(f, "<Q", "tensor count")
        if count != len(expected):
            raise FormatError(f"expected {len(expected)} tensors, header says {count}")
        params: dict[str, np.ndarray] = {}
        state: dict[str, np.ndarray] = {}
        state_names = {n for n, _ in state_layout(cfg)}
        for _ in range(count):
            (name_len,) = read_struct(f, "<H", "tensor name length")
            name = read_exact(f, name_len, "tensor name").decode()
            if name not in expected:
                raise FormatError(f"unexpected tensor {name!r}")
            (rank,) = read_struct(f, "<I", "tensor rank")
            if rank < 1 or rank > 4:
                raise FormatError(f"bad tensor rank {rank}")
            shape = read_struct(f, f"<{rank}I", "tensor shape")
            if shape != expected[name]:
                raise FormatError(f"tensor {name!r} has shape {shape}, expected {expected[name]}")
            payload = read_f64(f, int(np.prod(shape)), f"tensor {name!r}").reshape(shape)
            (state if name in state_names else params)[name] = payload
        if f.read(1):
            raise FormatError("trailing bytes after checkpoint payload")
    missing = set(expected) - set(params) - set(state)
    if missing:
        raise FormatError(f"checkpoint is missing tensors: {sorted(missing)}")
    return JNet(cfg, params, state, None if math.isnan(dt) else dt)
