"""Multiscale global convolution kernels.

A length-L kernel is assembled per channel from N sub-kernels of doubling
length, each upsampled from the same number of parameters d, so the
per-channel parameter count N*d grows only logarithmically in L.  Nearer
sub-kernels receive larger combination weights, either through a geometric
per-scale coefficient (``concat`` mode) or through an explicit per-position
power-law multiplier (``disentangled`` mode).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODES = ("concat", "disentangled")
INITS = ("gaussian", "cosine")

# Unit-norm tolerance guaranteed immediately after initialization.
NORM_ATOL = 1e-6


@dataclass(frozen=True)
class KernelConfig:
    """Hyperparameters of the kernel construction.

    Attributes:
        seq_len: kernel length L (equals the sequence length).
        scale_dim: parameters per scale d, with 1 <= d <= L.
        channels: number of independent depthwise channels H.
        mode: "concat" (geometric per-scale decay alpha**i) or
            "disentangled" (per-position decay p**-t).
        decay_alpha: geometric decay coefficient, concat mode only, in (0, 1].
        decay_t: position-decay exponent, disentangled mode only, >= 0.
        init: "gaussian" or "cosine" parameter initialization.
        init_sigma: std-dev of the gaussian init (pre-normalization).
        seed: RNG seed used when no generator is supplied.
    """

    seq_len: int
    scale_dim: int
    channels: int = 1
    mode: str = "concat"
    decay_alpha: float = 0.5
    decay_t: float = 1.0
    init: str = "gaussian"
    init_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.seq_len < 1:
            raise ValueError(f"seq_len must be positive, got {self.seq_len}")
        if not 1 <= self.scale_dim <= self.seq_len:
            raise ValueError(
                f"scale_dim must satisfy 1 <= d <= seq_len, got d={self.scale_dim}, L={self.seq_len}"
            )
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if not 0.0 < self.decay_alpha <= 1.0:
            raise ValueError(f"decay_alpha must be in (0, 1], got {self.decay_alpha}")
        if self.decay_t < 0.0:
            raise ValueError(f"decay_t must be >= 0, got {self.decay_t}")

    @property
    def num_scales(self) -> int:
        return num_scales(self.seq_len, self.scale_dim)


@dataclass(frozen=True)
class ScaleParams:
    """Learnable per-channel, per-scale parameter vectors.

    ``weights[h, i, :]`` is the d-vector for scale i of channel h.  ``alphas``
    optionally carries a fixed per-channel decay coefficient (cosine init in
    concat mode assigns one per channel); it is a hyperparameter, never
    trained.
    """

    weights: np.ndarray
    alphas: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 3:
            raise ValueError(f"weights must have shape (H, N, d), got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain non-finite values")
        object.__setattr__(self, "weights", w)
        if self.alphas is not None:
            a = np.asarray(self.alphas, dtype=np.float64)
            if a.shape != (w.shape[0],):
                raise ValueError(
                    f"alphas must have shape ({w.shape[0]},), got {a.shape}"
                )
            if not np.all((a > 0.0) & (a <= 1.0)):
                raise ValueError("alphas must lie in (0, 1]")
            object.__setattr__(self, "alphas", a)

    @property
    def channels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MaterializedKernel:
    """Assembled length-L kernel per channel with its frozen normalizer."""

    values: np.ndarray  # (H, L)
    normalizer: np.ndarray  # (H,)

    def __post_init__(self):
        v = np.asarray(self.values)
        z = np.asarray(self.normalizer)
        if v.ndim != 2 or z.shape != (v.shape[0],):
            raise ValueError(
                f"inconsistent kernel shapes: values {v.shape}, normalizer {z.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("kernel contains non-finite values")


def num_scales(seq_len: int, scale_dim: int) -> int:
    """Number of scales N = ceil(log2(L/d)) + 1, computed exactly.

    With N scales the concatenated sub-kernels cover d * 2**(N-1) >= L
    positions, so the assembled kernel always reaches full length.
    """
    if scale_dim < 1:
        raise ValueError(f"scale_dim must be >= 1, got {scale_dim}")
    if scale_dim > seq_len:
        raise ValueError(f"scale_dim {scale_dim} exceeds seq_len {seq_len}")
    n, cover = 1, scale_dim
    while cover < seq_len:
        cover *= 2
        n += 1
    return n


def sub_kernel_len(i: int, scale_dim: int) -> int:
    """Length of the i-th sub-kernel: 2**max(i-1, 0) * d."""
    if i < 0:
        raise ValueError(f"scale index must be >= 0, got {i}")
    return (1 << max(i - 1, 0)) * scale_dim


def coverage(seq_len: int, scale_dim: int) -> int:
    """Total length of all sub-kernels before truncation to seq_len."""
    n = num_scales(seq_len, scale_dim)
    return scale_dim if n == 1 else scale_dim * (1 << (n - 1))


def upsample_linear(w: np.ndarray, target_len: int) -> np.ndarray:
    """Align-corners linear interpolation of the last axis to target_len.

    Output position j reads source coordinate j*(d-1)/(target_len-1); the
    first and last source points map exactly onto the first and last outputs.
    A single source point broadcasts to a constant vector.
    """
    w = np.asarray(w)
    d = w.shape[-1]
    if target_len < d:
        raise ValueError(f"cannot upsample length {d} to shorter length {target_len}")
    if target_len == d:
        return w.copy()
    if d == 1:
        return np.broadcast_to(w, w.shape[:-1] + (target_len,)).copy()
    lo, hi, frac = _interp_indices(d, target_len)
    return w[..., lo] * (1.0 - frac) + w[..., hi] * frac


def _interp_indices(d: int, target_len: int):
    """Source indices and blend weights of align-corners interpolation."""
    pos = np.arange(target_len) * ((d - 1) / (target_len - 1))
    lo = np.minimum(pos.astype(np.int64), d - 2)
    frac = pos - lo
    return lo, lo + 1, frac


def compute_normalizer(raw_kernel: np.ndarray) -> np.ndarray:
    """L2 norm along the last axis; rejects all-zero kernels."""
    raw = np.asarray(raw_kernel)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw kernel contains non-finite values")
    z = np.linalg.norm(raw, axis=-1)
    if np.any(z == 0.0):
        raise ValueError("all-zero kernel has no normalizer")
    return z


def position_decay(seq_len: int, t: float, dtype=np.float64) -> np.ndarray:
    """Per-position multiplier [1**-t, 2**-t, ..., L**-t] (1-indexed)."""
    if t < 0.0:
        raise ValueError(f"decay exponent must be >= 0, got {t}")
    return np.arange(1, seq_len + 1, dtype=dtype) ** (-t)


def _check_params(params: ScaleParams, config: KernelConfig) -> None:
    expect = (config.channels, config.num_scales, config.scale_dim)
    if params.weights.shape != expect:
        raise ValueError(
            f"params shape {params.weights.shape} does not match config {expect}"
        )


def _assemble_raw(params: ScaleParams, config: KernelConfig) -> np.ndarray:
    """Concatenate upsampled sub-kernels, apply decay, truncate to L."""
    L, d = config.seq_len, config.scale_dim
    pieces = []
    for i in range(config.num_scales):
        seg = upsample_linear(params.weights[:, i, :], sub_kernel_len(i, d))
        if config.mode == "concat":
            alpha = params.alphas if params.alphas is not None else config.decay_alpha
            seg = seg * np.asarray(alpha**i).reshape(-1, 1)
        pieces.append(seg)
    raw = np.concatenate(pieces, axis=1)[:, :L]
    if config.mode == "disentangled":
        raw = raw * position_decay(L, config.decay_t)[None, :]
    return raw


def materialize(
    params: ScaleParams,
    config: KernelConfig,
    normalizer: np.ndarray | None = None,
) -> MaterializedKernel:
    """Build the per-channel kernel from parameters.

    When ``normalizer`` is None (initialization) each channel is divided by
    its own L2 norm, which is then frozen inside the returned kernel.  During
    training the frozen value is passed back in and never recomputed.
    """
    _check_params(params, config)
    raw = _assemble_raw(params, config)
    if normalizer is None:
        z = compute_normalizer(raw)
    else:
        z = np.asarray(normalizer, dtype=np.float64)
        if z.shape != (config.channels,):
            raise ValueError(f"normalizer must have shape ({config.channels},), got {z.shape}")
    return MaterializedKernel(values=raw / z[:, None], normalizer=z)


def build_kernel_concat(
    params: ScaleParams,
    config: KernelConfig,
    normalizer: np.ndarray | None = None,
) -> MaterializedKernel:
    """Kernel via geometric per-scale weighting alpha**i."""
    if config.mode != "concat":
        raise ValueError(f"config.mode must be 'concat', got {config.mode!r}")
    return materialize(params, config, normalizer)


def build_kernel_disentangled(
    params: ScaleParams,
    config: KernelConfig,
    normalizer: np.ndarray | None = None,
) -> MaterializedKernel:
    """Kernel via unweighted concatenation times per-position decay p**-t."""
    if config.mode != "disentangled":
        raise ValueError(f"config.mode must be 'disentangled', got {config.mode!r}")
    return materialize(params, config, normalizer)


def init_params(config: KernelConfig, rng: np.random.Generator | None = None) -> ScaleParams:
    """Draw initial ScaleParams; deterministic given the seed.

    gaussian: i.i.d. Normal(0, sigma**2) entries.  cosine: each channel's
    per-scale vector samples cos(2*pi*f_h*x) on d grid points x in [0, 1],
    with f_h log-uniform in [1, max(1, d/2)]; in concat mode each channel
    also receives a fixed decay coefficient drawn uniformly from [1/3, 1].
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    H, N, d = config.channels, config.num_scales, config.scale_dim
    alphas = None
    if config.init == "gaussian":
        weights = rng.normal(0.0, config.init_sigma, size=(H, N, d))
    else:
        f_hi = max(1.0, d / 2.0)
        freqs = np.exp(rng.uniform(0.0, np.log(f_hi), size=H))
        grid = np.linspace(0.0, 1.0, d) if d > 1 else np.zeros(1)
        wave = np.cos(2.0 * np.pi * freqs[:, None] * grid[None, :])  # (H, d)
        weights = np.repeat(wave[:, None, :], N, axis=1)
        if config.mode == "concat":
            alphas = rng.uniform(1.0 / 3.0, 1.0, size=H)
    return ScaleParams(weights=weights, alphas=alphas)


def init_kernel(
    config: KernelConfig, rng: np.random.Generator | None = None
) -> tuple[ScaleParams, MaterializedKernel]:
    """Initialize parameters and materialize the unit-norm kernel."""
    params = init_params(config, rng)
    return params, materialize(params, config)


def write_kernel_csv(kernel: MaterializedKernel, path) -> None:
    """Dump a kernel as CSV rows `channel,position,value`.

    Positions are 0-indexed; values carry 9 significant digits in
    scientific notation.  The write is atomic (temp file + rename).
    """
    from .ioutil import atomic_write_text

    lines = ["channel,position,value"]
    H, L = kernel.values.shape
    for h in range(H):
        for pos in range(L):
            lines.append(f"{h},{pos},{kernel.values[h, pos]:.8e}")
    atomic_write_text(path, "\n".join(lines) + "\n")
