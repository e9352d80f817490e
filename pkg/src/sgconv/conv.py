"""Causal depthwise convolution of length-L sequences with length-L kernels.

The production path zero-pads to a power-of-two FFT size and multiplies
spectra, costing O(L log L).  Two direct O(L^2) implementations are kept
alongside: a definitional per-position sum that serves as the verification
oracle, and a blocked matrix-multiply variant fast enough to benchmark at
large L.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import MaterializedKernel


@dataclass(frozen=True)
class ConvPlan:
    """Transform sizes for one sequence length, reusable across calls."""

    seq_len: int
    fft_size: int

    def __post_init__(self):
        if self.seq_len < 1:
            raise ValueError(f"seq_len must be positive, got {self.seq_len}")
        if self.fft_size < 2 * self.seq_len - 1:
            raise ValueError(
                f"fft_size {self.fft_size} wraps around for linear convolution at L={self.seq_len}"
            )


def make_plan(seq_len: int) -> ConvPlan:
    """Plan with the smallest power-of-two FFT size >= 2L."""
    if seq_len < 1:
        raise ValueError(f"seq_len must be positive, got {seq_len}")
    m = 1
    while m < 2 * seq_len:
        m *= 2
    return ConvPlan(seq_len=seq_len, fft_size=m)


def _kernel_values(kernel) -> np.ndarray:
    if isinstance(kernel, MaterializedKernel):
        return kernel.values
    return np.asarray(kernel)


def causal_conv_direct(x: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Definitional causal convolution: y[n] = sum_{m<=n} k[m] * x[n-m]."""
    x = np.asarray(x)
    k = np.asarray(k)
    if x.ndim != 1 or k.ndim != 1 or x.shape != k.shape:
        raise ValueError(f"inputs must be equal-length vectors, got {x.shape} and {k.shape}")
    n = x.shape[0]
    y = np.empty_like(x)
    for i in range(n):
        y[i] = np.dot(k[: i + 1], x[i::-1])
    return y


def causal_conv_fft(x: np.ndarray, k: np.ndarray, plan: ConvPlan) -> np.ndarray:
    """FFT-based causal convolution; matches causal_conv_direct to roundoff."""
    x = np.asarray(x)
    k = np.asarray(k)
    if x.shape[-1] != plan.seq_len or k.shape[-1] != plan.seq_len:
        raise ValueError(
            f"plan is for L={plan.seq_len}, got inputs of length {x.shape[-1]} and {k.shape[-1]}"
        )
    m = plan.fft_size
    spec = np.fft.rfft(x, n=m) * np.fft.rfft(k, n=m)
    return np.fft.irfft(spec, n=m)[..., : plan.seq_len].astype(x.dtype, copy=False)


def depthwise_conv_batch(x: np.ndarray, kernel, plan: ConvPlan) -> np.ndarray:
    """Per-channel causal convolution of a (B, H, L) batch.

    Channel h of the output depends only on channel h of the input and
    kernel.  Kernel spectra are computed once and shared across the batch.
    """
    x = np.asarray(x)
    kv = _kernel_values(kernel)
    if x.ndim != 3:
        raise ValueError(f"input must have shape (B, H, L), got {x.shape}")
    if kv.ndim != 2 or kv.shape[0] != x.shape[1]:
        raise ValueError(f"kernel shape {kv.shape} does not match input {x.shape}")
    if x.shape[2] != plan.seq_len or kv.shape[1] != plan.seq_len:
        raise ValueError(f"plan is for L={plan.seq_len}, got input L={x.shape[2]}")
    m = plan.fft_size
    kf = np.fft.rfft(kv.astype(x.dtype, copy=False), n=m)
    xf = np.fft.rfft(x, n=m)
    y = np.fft.irfft(xf * kf[None, :, :], n=m)[..., : plan.seq_len]
    return y.astype(x.dtype, copy=False)


def depthwise_conv_direct_batch(x: np.ndarray, kernel, block: int = 1024) -> np.ndarray:
    """Direct O(L^2) depthwise convolution via blocked triangular matmuls.

    The causal kernel matrix is Toeplitz, so its square blocks repeat along
    each diagonal; one block per diagonal offset is materialized and applied
    to the whole batch with a matrix product.  Numerically equal to
    causal_conv_direct up to accumulation order.
    """
    x = np.asarray(x)
    kv = _kernel_values(kernel).astype(x.dtype, copy=False)
    if x.ndim != 3 or kv.ndim != 2 or kv.shape[0] != x.shape[1] or kv.shape[1] != x.shape[2]:
        raise ValueError(f"inconsistent shapes: input {x.shape}, kernel {kv.shape}")
    b, h, l = x.shape
    t = min(block, l)
    nb = -(-l // t)
    lp = nb * t
    xp = np.zeros((b, h, lp), dtype=x.dtype)
    xp[..., :l] = x
    kp = np.zeros((h, lp), dtype=x.dtype)
    kp[:, :l] = kv
    y = np.zeros((b, h, lp), dtype=x.dtype)
    uv = np.arange(t)[:, None] - np.arange(t)[None, :]  # u - v within a block
    for ch in range(h):
        kext = np.concatenate([np.zeros(t - 1, dtype=x.dtype), kp[ch]])
        for e in range(nb):
            blk = kext[(t - 1 + e * t) + uv]  # (t, t): k[e*t + u - v], zero below diagonal reach
            for i in range(e, nb):
                j = i - e
                y[:, ch, i * t : (i + 1) * t] += xp[:, ch, j * t : (j + 1) * t] @ blk.T
    return y[..., :l]
