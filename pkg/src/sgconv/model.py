"""Minimal residual block around the global convolution, plus a toy
classifier and training loop.

The block is pre-normalized: y = x + Mix(act(DepthwiseConv(Norm(x)))), with
the convolution kernel rebuilt from the current parameters on every forward
pass (its normalizer stays frozen at the init-time value).  All gradients
are the hand-written adjoints from the grad module; there is no autodiff
anywhere.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .conv import ConvPlan, depthwise_conv_batch, make_plan
from .grad import depthwise_conv_adjoint_batch, kernel_param_grad
from .ioutil import atomic_write_bytes
from .kernel import KernelConfig, ScaleParams, init_params, materialize
from .tasks import TaskSpec, gen_batch

LN_EPS = 1e-5
ACTIVATIONS = ("gelu", "relu")
POOLINGS = ("mean", "last")
OPTIMIZERS = ("adam", "sgd")

# Regression predictions within this distance of the target count as correct
# in the logged accuracy.
REGRESSION_TOL = 0.1

CHECKPOINT_MAGIC = b"SGCV"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class BlockConfig:
    """Shape and wiring of one residual convolution block."""

    channels: int
    seq_len: int
    kernel: KernelConfig
    mix_dim: int | None = None
    activation: str = "gelu"

    def __post_init__(self):
        if self.kernel.seq_len != self.seq_len:
            raise ValueError("kernel.seq_len must equal block seq_len")
        if self.kernel.channels != self.channels:
            raise ValueError("kernel.channels must equal block channels")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.mix_dim is None:
            object.__setattr__(self, "mix_dim", self.channels)
        # The mixing map is a single linear H -> H layer feeding a residual
        # add, so its width is pinned to the channel count.
        if self.mix_dim != self.channels:
            raise ValueError(
                f"mix_dim must equal channels ({self.channels}), got {self.mix_dim}"
            )


@dataclass(frozen=True)
class ModelConfig:
    """Toy sequence classifier: embed/project, blocks, pool, affine head."""

    seq_len: int
    channels: int
    classes: int
    n_blocks: int = 2
    vocab_size: int | None = None  # token inputs
    in_channels: int | None = None  # real-valued inputs
    scale_dim: int = 8
    mode: str = "concat"
    decay_alpha: float = 0.5
    decay_t: float = 1.0
    kernel_init: str = "gaussian"
    activation: str = "gelu"
    pooling: str = "mean"

    def __post_init__(self):
        if (self.vocab_size is None) == (self.in_channels is None):
            raise ValueError("exactly one of vocab_size / in_channels must be set")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.classes < 1:
            raise ValueError("classes must be >= 1")

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(
            seq_len=self.seq_len,
            scale_dim=self.scale_dim,
            channels=self.channels,
            mode=self.mode,
            decay_alpha=self.decay_alpha,
            decay_t=self.decay_t,
            init=self.kernel_init,
        )

    def block_config(self) -> BlockConfig:
        return BlockConfig(
            channels=self.channels,
            seq_len=self.seq_len,
            kernel=self.kernel_config(),
            activation=self.activation,
        )

    @classmethod
    def for_task(cls, spec: TaskSpec, channels: int = 32, **kwargs) -> "ModelConfig":
        """Model wiring matched to a synthetic task's input/output contract."""
        if spec.is_regression:
            return cls(
                seq_len=spec.seq_len,
                channels=channels,
                classes=1,
                in_channels=2,
                **kwargs,
            )
        return cls(
            seq_len=spec.seq_len,
            channels=channels,
            classes=spec.classes,
            vocab_size=spec.vocab_size,
            **kwargs,
        )


@dataclass(frozen=True)
class TrainConfig:
    steps: int
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    seed: int = 0
    eval_every: int = 50
    eval_samples: int = 256

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr < 0.0:
            raise ValueError("lr must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.eval_every < 1 or self.batch_size < 1 or self.eval_samples < 1:
            raise ValueError("eval_every, batch_size, eval_samples must be >= 1")


@dataclass
class BlockParams:
    weights: np.ndarray  # (H, N, d) learnable kernel parameters
    kernel_norm: np.ndarray  # (H,) frozen normalizer, never trained
    gamma: np.ndarray  # (H,) layer-norm scale
    beta: np.ndarray  # (H,) layer-norm bias
    mix_w: np.ndarray  # (H, H) pointwise channel mixing
    mix_b: np.ndarray  # (H,)
    alphas: np.ndarray | None = None  # (H,) fixed per-channel decay, if any


@dataclass
class ModelState:
    blocks: list[BlockParams]
    head_w: np.ndarray  # (H, C)
    head_b: np.ndarray  # (C,)
    embed: np.ndarray | None = None  # (V, H) token table
    in_proj: np.ndarray | None = None  # (H, Cin) input projection
    in_bias: np.ndarray | None = None  # (H,)


def init_model(
    cfg: ModelConfig, rng: np.random.Generator | None = None, zero_mix: bool = False
) -> ModelState:
    """Initialize all parameters; deterministic given the generator.

    With zero_mix=True every block's mixing map starts at exactly zero, which
    makes the whole stack the identity on its input.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    H = cfg.channels
    kcfg = cfg.kernel_config()
    blocks = []
    for _ in range(cfg.n_blocks):
        params = init_params(kcfg, rng)
        kern = materialize(params, kcfg)
        if zero_mix:
            mix_w = np.zeros((H, H))
        else:
            mix_w = rng.normal(0.0, 1.0 / np.sqrt(H), size=(H, H))
        blocks.append(
            BlockParams(
                weights=params.weights,
                alphas=params.alphas,
                kernel_norm=kern.normalizer,
                gamma=np.ones(H),
                beta=np.zeros(H),
                mix_w=mix_w,
                mix_b=np.zeros(H),
            )
        )
    state = ModelState(
        blocks=blocks,
        head_w=rng.normal(0.0, 0.01 / np.sqrt(H), size=(H, cfg.classes)),
        head_b=np.zeros(cfg.classes),
    )
    if cfg.vocab_size is not None:
        state.embed = rng.normal(0.0, 1.0, size=(cfg.vocab_size, H))
    else:
        state.in_proj = rng.normal(0.0, 1.0 / np.sqrt(cfg.in_channels), size=(H, cfg.in_channels))
        state.in_bias = np.zeros(H)
    return state


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    c = np.sqrt(2.0 / np.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))


def _act_grad(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0.0).astype(x.dtype)
    c = np.sqrt(2.0 / np.pi)
    th = np.tanh(c * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * c * (1.0 + 3 * 0.044715 * x**2)


def block_forward(
    x: np.ndarray,
    bp: BlockParams,
    bcfg: BlockConfig,
    plan: ConvPlan,
    want_cache: bool = False,
):
    """One residual block: x + Mix(act(Conv(Norm(x)))).

    The kernel is rebuilt from the block's current parameters with its
    frozen normalizer, so learning reshapes the kernel while its init-time
    scale convention stays fixed.
    """
    if x.ndim != 3 or x.shape[1] != bcfg.channels or x.shape[2] != bcfg.seq_len:
        raise ValueError(
            f"input must have shape (B, {bcfg.channels}, {bcfg.seq_len}), got {x.shape}"
        )
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    h = bp.gamma[None, :, None] * xhat + bp.beta[None, :, None]
    kern = materialize(
        ScaleParams(weights=bp.weights, alphas=bp.alphas),
        bcfg.kernel,
        normalizer=bp.kernel_norm,
    )
    c = depthwise_conv_batch(h, kern.values, plan)
    a = _act(bcfg.activation, c)
    m = np.einsum("ij,bjl->bil", bp.mix_w, a) + bp.mix_b[None, :, None]
    y = x + m
    if not want_cache:
        return y
    cache = {"xhat": xhat, "inv": inv, "h": h, "kernel": kern.values, "c": c, "a": a}
    return y, cache


def block_backward(dy: np.ndarray, cache: dict, bp: BlockParams, bcfg: BlockConfig, plan: ConvPlan):
    """Adjoint of block_forward; returns (dx, grads dict)."""
    dm = dy
    dmix_w = np.einsum("bil,bjl->ij", dm, cache["a"])
    dmix_b = dm.sum(axis=(0, 2))
    da = np.einsum("ij,bil->bjl", bp.mix_w, dm)
    dc = da * _act_grad(bcfg.activation, cache["c"])
    dh, dkernel = depthwise_conv_adjoint_batch(cache["h"], cache["kernel"], dc, plan)
    dweights = kernel_param_grad(
        dkernel,
        ScaleParams(weights=bp.weights, alphas=bp.alphas),
        bcfg.kernel,
        bp.kernel_norm,
    ).d_weights
    dgamma = (dh * cache["xhat"]).sum(axis=(0, 2))
    dbeta = dh.sum(axis=(0, 2))
    dxhat = dh * bp.gamma[None, :, None]
    xhat = cache["xhat"]
    dx_branch = cache["inv"] * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )
    dx = dy + dx_branch
    grads = {
        "weights": dweights,
        "gamma": dgamma,
        "beta": dbeta,
        "mix_w": dmix_w,
        "mix_b": dmix_b,
    }
    return dx, grads


def _embed_inputs(inputs: np.ndarray, state: ModelState, cfg: ModelConfig) -> np.ndarray:
    if cfg.vocab_size is not None:
        tokens = np.asarray(inputs)
        if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
            raise ValueError(
                f"token id out of range [0, {cfg.vocab_size}): "
                f"min={tokens.min()}, max={tokens.max()}"
            )
        return state.embed[tokens].transpose(0, 2, 1)
    x = np.asarray(inputs, dtype=np.float64)
    return np.einsum("hc,bcl->bhl", state.in_proj, x) + state.in_bias[None, :, None]


def classifier_forward(
    inputs: np.ndarray,
    state: ModelState,
    cfg: ModelConfig,
    plan: ConvPlan | None = None,
    want_cache: bool = False,
):
    """Embed or project, run the block stack, pool, and read out logits."""
    if plan is None:
        plan = make_plan(cfg.seq_len)
    bcfg = cfg.block_config()
    x = _embed_inputs(inputs, state, cfg)
    caches = [] if want_cache else None
    first = x
    for bp in state.blocks:
        if want_cache:
            x, cache = block_forward(x, bp, bcfg, plan, want_cache=True)
            caches.append(cache)
        else:
            x = block_forward(x, bp, bcfg, plan)
    if cfg.pooling == "mean":
        pooled = x.mean(axis=2)
    else:
        pooled = x[:, :, -1]
    logits = pooled @ state.head_w + state.head_b[None, :]
    if not want_cache:
        return logits
    return logits, {"embedded": first, "caches": caches, "final": x, "pooled": pooled}


def classifier_backward(
    dlogits: np.ndarray,
    fwd_cache: dict,
    inputs: np.ndarray,
    state: ModelState,
    cfg: ModelConfig,
    plan: ConvPlan,
) -> dict:
    """Gradients of every trainable tensor, keyed like _param_items."""
    bcfg = cfg.block_config()
    grads = {}
    pooled = fwd_cache["pooled"]
    grads["head_w"] = pooled.T @ dlogits
    grads["head_b"] = dlogits.sum(axis=0)
    dpooled = dlogits @ state.head_w.T
    b, h = dpooled.shape
    L = cfg.seq_len
    if cfg.pooling == "mean":
        dx = np.broadcast_to(dpooled[:, :, None] / L, (b, h, L)).copy()
    else:
        dx = np.zeros((b, h, L))
        dx[:, :, -1] = dpooled
    for i in reversed(range(len(state.blocks))):
        dx, bg = block_backward(dx, fwd_cache["caches"][i], state.blocks[i], bcfg, plan)
        for key, val in bg.items():
            grads[f"block{i}.{key}"] = val
    if cfg.vocab_size is not None:
        dembed = np.zeros_like(state.embed)
        np.add.at(dembed, np.asarray(inputs), dx.transpose(0, 2, 1))
        grads["embed"] = dembed
    else:
        x = np.asarray(inputs, dtype=np.float64)
        grads["in_proj"] = np.einsum("bhl,bcl->hc", dx, x)
        grads["in_bias"] = dx.sum(axis=(0, 2))
    return grads


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n


def squared_error(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error on a single-output head, and its logit gradient."""
    pred = logits[:, 0]
    err = pred - targets
    loss = float((err**2).mean())
    dlogits = np.zeros_like(logits)
    dlogits[:, 0] = 2.0 * err / err.shape[0]
    return loss, dlogits


def _param_items(state: ModelState) -> list[tuple[str, np.ndarray]]:
    """Trainable tensors in their fixed declaration order."""
    items = []
    if state.embed is not None:
        items.append(("embed", state.embed))
    if state.in_proj is not None:
        items.append(("in_proj", state.in_proj))
        items.append(("in_bias", state.in_bias))
    for i, bp in enumerate(state.blocks):
        items.append((f"block{i}.weights", bp.weights))
        items.append((f"block{i}.gamma", bp.gamma))
        items.append((f"block{i}.beta", bp.beta))
        items.append((f"block{i}.mix_w", bp.mix_w))
        items.append((f"block{i}.mix_b", bp.mix_b))
    items.append(("head_w", state.head_w))
    items.append(("head_b", state.head_b))
    return items


def _buffer_items(state: ModelState) -> list[tuple[str, np.ndarray]]:
    """Fixed (non-trainable) tensors needed to rebuild the model."""
    items = []
    for i, bp in enumerate(state.blocks):
        items.append((f"block{i}.kernel_norm", bp.kernel_norm))
        if bp.alphas is not None:
            items.append((f"block{i}.alphas", bp.alphas))
    return items


class _Optimizer:
    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.params = params
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        if cfg.optimizer == "adam":
            self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        if c.optimizer == "adam":
            bc1 = 1.0 - c.beta1**self.t
            bc2 = 1.0 - c.beta2**self.t
            for p, g, m, v in zip(self.params, grads, self.m, self.v):
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * g**2
                p -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
        else:
            for p, g, m in zip(self.params, grads, self.m):
                m *= c.momentum
                m += g
                p -= c.lr * m


def _evaluate(
    state: ModelState,
    cfg: ModelConfig,
    plan: ConvPlan,
    inputs: np.ndarray,
    labels: np.ndarray,
    regression: bool,
) -> tuple[float, float]:
    logits = classifier_forward(inputs, state, cfg, plan)
    if regression:
        loss, _ = squared_error(logits, labels)
        acc = float((np.abs(logits[:, 0] - labels) <= REGRESSION_TOL).mean())
    else:
        loss, _ = cross_entropy(logits, labels)
        acc = float((logits.argmax(axis=1) == labels).mean())
    return loss, acc


@dataclass
class TrainResult:
    log: list[dict]
    state: ModelState
    model_cfg: ModelConfig
    train_cfg: TrainConfig


def train(
    task: TaskSpec,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    state: ModelState | None = None,
) -> TrainResult:
    """Deterministic training run; the log holds eval loss/accuracy.

    The log records the fixed held-out evaluation set's loss and accuracy at
    step 0, every eval_every steps, and at the final step, so a zero
    learning rate yields an exactly flat curve.  Passing a state resumes
    from existing parameters (e.g. a loaded checkpoint).  A non-finite
    training loss aborts with TrainingDiverged.
    """
    seqs = np.random.SeedSequence(train_cfg.seed).spawn(3)
    init_rng = np.random.default_rng(seqs[0])
    data_rng = np.random.default_rng(seqs[1])
    eval_rng = np.random.default_rng(seqs[2])

    if state is None:
        state = init_model(model_cfg, init_rng)
    plan = make_plan(model_cfg.seq_len)
    eval_inputs, eval_labels = gen_batch(task, train_cfg.eval_samples, eval_rng)
    regression = task.is_regression

    params = [arr for _, arr in _param_items(state)]
    names = [name for name, _ in _param_items(state)]
    opt = _Optimizer(params, train_cfg)

    log = []

    def record(step: int) -> None:
        loss, acc = _evaluate(state, model_cfg, plan, eval_inputs, eval_labels, regression)
        log.append({"step": step, "loss": loss, "acc": acc})

    record(0)
    for step in range(1, train_cfg.steps + 1):
        inputs, labels = gen_batch(task, train_cfg.batch_size, data_rng)
        logits, cache = classifier_forward(inputs, state, model_cfg, plan, want_cache=True)
        if regression:
            loss, dlogits = squared_error(logits, labels)
        else:
            loss, dlogits = cross_entropy(logits, labels)
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"non-finite training loss {loss} at step {step} "
                f"(lr={train_cfg.lr}, optimizer={train_cfg.optimizer})"
            )
        grads = classifier_backward(dlogits, cache, inputs, state, model_cfg, plan)
        opt.step([grads[name] for name in names])
        if step % train_cfg.eval_every == 0 or step == train_cfg.steps:
            record(step)
    return TrainResult(log=log, state=state, model_cfg=model_cfg, train_cfg=train_cfg)


def ablate_decay(
    task: TaskSpec,
    grid: list[tuple[float, int]],
    train_cfg: TrainConfig,
    channels: int = 32,
    n_blocks: int = 1,
    seeds: tuple[int, ...] = (0,),
) -> list[dict]:
    """Train one model per (decay exponent t, scale dim d) grid point.

    All grid points share the same seeds so rows are comparable; returns one
    row {"t", "d", "accuracy", "seed"} per (grid point, seed).
    """
    if not grid:
        raise ValueError("grid must contain at least one (t, d) pair")
    rows = []
    for seed in seeds:
        for t, d in grid:
            cfg = ModelConfig.for_task(
                task,
                channels=channels,
                n_blocks=n_blocks,
                scale_dim=int(d),
                mode="disentangled",
                decay_t=float(t),
            )
            result = train(task, cfg, TrainConfig(**{**asdict(train_cfg), "seed": seed}))
            rows.append(
                {
                    "t": float(t),
                    "d": int(d),
                    "accuracy": result.log[-1]["acc"],
                    "seed": int(seed),
                }
            )
    return rows


def save_checkpoint(path, state: ModelState, model_cfg: ModelConfig) -> None:
    """Binary checkpoint: magic, version, length-prefixed JSON header, then
    every tensor as little-endian float64 in declaration order."""
    tensors = _param_items(state) + _buffer_items(state)
    header = {
        "model": asdict(model_cfg),
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [
        CHECKPOINT_MAGIC,
        np.uint32(CHECKPOINT_VERSION).astype("<u4").tobytes(),
        np.uint32(len(blob)).astype("<u4").tobytes(),
        blob,
    ]
    for _, arr in tensors:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_checkpoint(path) -> tuple[ModelState, ModelConfig]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    version = int(np.frombuffer(data[4:8], dtype="<u4")[0])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    jlen = int(np.frombuffer(data[8:12], dtype="<u4")[0])
    header = json.loads(data[12 : 12 + jlen].decode("utf-8"))
    cfg = ModelConfig(**header["model"])
    offset = 12 + jlen
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data[offset : offset + 8 * count], dtype="<f8")
        arrays[entry["name"]] = arr.astype(np.float64).reshape(shape)
        offset += 8 * count

    blocks = []
    for i in range(cfg.n_blocks):
        blocks.append(
            BlockParams(
                weights=arrays[f"block{i}.weights"],
                kernel_norm=arrays[f"block{i}.kernel_norm"],
                gamma=arrays[f"block{i}.gamma"],
                beta=arrays[f"block{i}.beta"],
                mix_w=arrays[f"block{i}.mix_w"],
                mix_b=arrays[f"block{i}.mix_b"],
                alphas=arrays.get(f"block{i}.alphas"),
            )
        )
    state = ModelState(
        blocks=blocks,
        head_w=arrays["head_w"],
        head_b=arrays["head_b"],
        embed=arrays.get("embed"),
        in_proj=arrays.get("in_proj"),
        in_bias=arrays.get("in_bias"),
    )
    return state, cfg
