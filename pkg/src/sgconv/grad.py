"""Analytic reverse-mode gradients for the kernel/convolution pipeline.

The operation graph is short and fixed (upsample, decay, concatenate,
truncate, normalize, convolve), so the adjoints are written out by hand and
checked against central finite differences rather than routed through an
autodiff framework.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import ConvPlan, make_plan
from .kernel import (
    KernelConfig,
    ScaleParams,
    _interp_indices,
    coverage,
    position_decay,
    sub_kernel_len,
)


@dataclass(frozen=True)
class GradBundle:
    """Gradients matching the forward shapes exactly."""

    d_weights: np.ndarray  # (H, N, d), same shape as ScaleParams.weights
    d_input: np.ndarray | None = None  # (B, H, L) when input grads are requested

    def __post_init__(self):
        if not np.all(np.isfinite(self.d_weights)):
            raise ValueError("d_weights contain non-finite values")
        if self.d_input is not None and not np.all(np.isfinite(self.d_input)):
            raise ValueError("d_input contains non-finite values")


def _correlate(a: np.ndarray, b: np.ndarray, plan: ConvPlan) -> np.ndarray:
    """corr[n] = sum_m a[m] * b[n+m] over the last axis, via FFT."""
    m = plan.fft_size
    spec = np.conj(np.fft.rfft(a, n=m)) * np.fft.rfft(b, n=m)
    return np.fft.irfft(spec, n=m)[..., : plan.seq_len]


def conv_adjoint(
    x: np.ndarray, k: np.ndarray, dy: np.ndarray, plan: ConvPlan | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of causal convolution for a single sequence.

    Returns (dx, dk) with dx[n] = sum_m k[m]*dy[n+m] and
    dk[m] = sum_{n>=m} dy[n]*x[n-m]; both are correlations evaluated in
    O(L log L).
    """
    x = np.asarray(x)
    k = np.asarray(k)
    dy = np.asarray(dy)
    if not (x.shape == k.shape == dy.shape) or x.ndim != 1:
        raise ValueError(
            f"x, k, dy must be equal-length vectors, got {x.shape}, {k.shape}, {dy.shape}"
        )
    if plan is None:
        plan = make_plan(x.shape[0])
    elif plan.seq_len != x.shape[0]:
        raise ValueError(f"plan is for L={plan.seq_len}, inputs have L={x.shape[0]}")
    dx = _correlate(k, dy, plan)
    dk = _correlate(x, dy, plan)
    return dx, dk


def depthwise_conv_adjoint_batch(
    x: np.ndarray, kernel_values: np.ndarray, dy: np.ndarray, plan: ConvPlan
) -> tuple[np.ndarray, np.ndarray]:
    """Batched adjoint of depthwise_conv_batch.

    Returns (dx, dk) where dx has shape (B, H, L) and dk has shape (H, L)
    with the batch contributions summed (fixed summation order).
    """
    x = np.asarray(x)
    kv = np.asarray(kernel_values)
    dy = np.asarray(dy)
    if x.shape != dy.shape or x.ndim != 3 or kv.shape != (x.shape[1], x.shape[2]):
        raise ValueError(
            f"inconsistent shapes: x {x.shape}, dy {dy.shape}, kernel {kv.shape}"
        )
    m = plan.fft_size
    kf = np.fft.rfft(kv, n=m)
    xf = np.fft.rfft(x, n=m)
    dyf = np.fft.rfft(dy, n=m)
    dx = np.fft.irfft(np.conj(kf)[None] * dyf, n=m)[..., : plan.seq_len]
    dk = np.fft.irfft((np.conj(xf) * dyf).sum(axis=0), n=m)[..., : plan.seq_len]
    return dx, dk


def upsample_adjoint(g: np.ndarray, d: int) -> np.ndarray:
    """Transpose of align-corners linear interpolation on the last axis.

    Each incoming gradient entry is scattered onto its two neighboring
    source knots with the same blend weights used in the forward pass.
    """
    g = np.asarray(g, dtype=np.float64)
    l = g.shape[-1]
    if d < 1:
        raise ValueError(f"source length must be >= 1, got {d}")
    if l < d:
        raise ValueError(f"gradient length {l} shorter than source length {d}")
    if l == d:
        return g.copy()
    if d == 1:
        return g.sum(axis=-1, keepdims=True)
    lo, hi, frac = _interp_indices(d, l)
    lead = g.shape[:-1]
    g2 = g.reshape(-1, l)
    out = np.zeros((g2.shape[0], d))
    rows = np.arange(g2.shape[0])[:, None]
    np.add.at(out, (rows, lo[None, :]), g2 * (1.0 - frac))
    np.add.at(out, (rows, hi[None, :]), g2 * frac)
    return out.reshape(lead + (d,))


def kernel_param_grad(
    d_kernel: np.ndarray,
    params: ScaleParams,
    config: KernelConfig,
    normalizer: np.ndarray,
) -> GradBundle:
    """Pull a kernel-space gradient (H, L) back to ScaleParams space.

    Applies, in reverse order: division by the frozen normalizer (a
    constant, so a plain 1/Z scaling), the per-position decay (disentangled)
    or per-scale coefficient (concat), zero-extension over the truncated
    tail, the split at sub-kernel boundaries, and the upsample transpose.
    """
    d_kernel = np.asarray(d_kernel, dtype=np.float64)
    H, N, d = params.weights.shape
    L = config.seq_len
    if d_kernel.shape != (H, L):
        raise ValueError(f"d_kernel must have shape ({H}, {L}), got {d_kernel.shape}")
    if (H, N, d) != (config.channels, config.num_scales, config.scale_dim):
        raise ValueError("params do not match config")
    z = np.asarray(normalizer, dtype=np.float64)
    if z.shape != (H,):
        raise ValueError(f"normalizer must have shape ({H},), got {z.shape}")

    g = d_kernel / z[:, None]
    if config.mode == "disentangled":
        g = g * position_decay(L, config.decay_t)[None, :]
    cov = coverage(L, d)
    if cov > L:
        g = np.concatenate([g, np.zeros((H, cov - L))], axis=1)

    d_weights = np.empty((H, N, d))
    offset = 0
    for i in range(N):
        li = sub_kernel_len(i, d)
        seg = g[:, offset : offset + li]
        if config.mode == "concat":
            alpha = params.alphas if params.alphas is not None else config.decay_alpha
            seg = seg * np.asarray(alpha**i).reshape(-1, 1)
        d_weights[:, i, :] = upsample_adjoint(seg, d)
        offset += li
    return GradBundle(d_weights=d_weights)


def finite_diff_check(
    loss_fn,
    params: ScaleParams,
    analytic: GradBundle,
    eps: float = 1e-5,
    max_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max deviation of the analytic gradient from central differences.

    Per coordinate the step is eps * max(1, |p_i|); the deviation is relative
    where the analytic entry exceeds 1e-8 in magnitude and absolute below
    that.  For parameter tensors larger than max_coords a seeded random
    subset of max_coords coordinates is probed.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")
    flat_w = params.weights.ravel()
    n = flat_w.size
    if n > max_coords:
        idx = np.random.default_rng(seed).choice(n, size=max_coords, replace=False)
        idx.sort()
    else:
        idx = np.arange(n)
    an = analytic.d_weights.ravel()
    worst = 0.0
    for i in idx:
        h = eps * max(1.0, abs(flat_w[i]))
        w = params.weights.copy()
        w.flat[i] = flat_w[i] + h
        lp = loss_fn(ScaleParams(weights=w, alphas=params.alphas))
        w.flat[i] = flat_w[i] - h
        lm = loss_fn(ScaleParams(weights=w, alphas=params.alphas))
        fd = (lp - lm) / (2.0 * h)
        dev = abs(fd - an[i])
        if abs(an[i]) >= 1e-8:
            dev /= abs(an[i])
        worst = max(worst, dev)
    return worst
