"""Command-line entry point: verify, bench, dump-kernel, train, ablate.

Every command is deterministic given --seed except bench timings (whose CSV
schema is still fixed).  An optional --config file supplies `key = value`
defaults; explicit command-line flags always win.
"""

from __future__ import annotations

import argparse
import json
import os.path
import sys

import numpy as np

from . import bench as bench_mod
from . import model as model_mod
from . import tasks as tasks_mod
from . import verify as verify_mod
from .ioutil import atomic_write_text
from .kernel import KernelConfig, init_kernel, write_kernel_csv

DEFAULT_T_SWEEP = (0.0, 0.5, 1.0, 2.0)
DEFAULT_D_SWEEP = (1, 8, 64)
DEFAULT_FIXED_D = 8
DEFAULT_FIXED_T = 1.0

# config-file keys may use the short flag spellings
KEY_ALIASES = {"len": "seq_len", "alpha": "decay_alpha", "t": "decay_t"}


def _parse_config_file(path) -> dict[str, str]:
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            entries[KEY_ALIASES.get(key, key)] = value.strip()
    return entries


def _coerce(raw: str, like):
    if isinstance(like, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, (tuple, list)):
        item = like[0] if like else 0
        return tuple(type(item)(tok) for tok in raw.replace(" ", "").split(","))
    return raw


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults <- config file <- explicit CLI flags."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        for key, raw in _parse_config_file(args.config).items():
            if key in resolved:
                resolved[key] = _coerce(raw, defaults[key])
    for key in resolved:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            resolved[key] = cli_val
    return resolved


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(" ", "").split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(" ", "").split(","))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--out", type=str, default=None, help="output path")
    p.add_argument("--precision", choices=("f32", "f64"), default=None)
    p.add_argument("--config", type=str, default=None, help="key = value defaults file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgconv",
        description="Structured global convolution kernels: verification, "
        "benchmarks, kernel dumps, training demos, and decay ablations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the module invariant suites")
    _add_common(p)
    p.add_argument("--filter", type=str, default=None, help="only suites whose name contains this")

    p = sub.add_parser("bench", help="time conv implementations across lengths")
    _add_common(p)
    p.add_argument("--lengths", type=_int_list, default=None, help="comma-separated, ascending")
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--direct-cap", dest="direct_cap", type=int, default=None,
                   help="skip conv_direct above this length")
    p.add_argument("--impls", type=lambda s: tuple(s.replace(" ", "").split(",")), default=None)

    p = sub.add_parser("dump-kernel", help="materialize a kernel and dump it as CSV")
    _add_common(p)
    p.add_argument("--len", dest="seq_len", type=int, default=None)
    p.add_argument("--scale-dim", dest="scale_dim", type=int, default=None)
    p.add_argument("--alpha", dest="decay_alpha", type=float, default=None)
    p.add_argument("--t", dest="decay_t", type=float, default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--mode", choices=("concat", "disentangled"), default=None)
    p.add_argument("--init", choices=("gaussian", "cosine"), default=None)

    p = sub.add_parser("train", help="train the toy classifier on a synthetic task")
    _add_common(p)
    p.add_argument("--task", choices=("first-token-recall", "adding-problem", "sparse-majority"),
                   default=None)
    p.add_argument("--len", dest="seq_len", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--scale-dim", dest="scale_dim", type=int, default=None)
    p.add_argument("--mode", choices=("concat", "disentangled"), default=None)
    p.add_argument("--alpha", dest="decay_alpha", type=float, default=None)
    p.add_argument("--t", dest="decay_t", type=float, default=None)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    p.add_argument("--resume", type=str, default=None, help="checkpoint to continue from")

    p = sub.add_parser("ablate", help="decay/dimension ablation sweeps")
    _add_common(p)
    p.add_argument("--task", choices=("first-token-recall", "adding-problem", "sparse-majority"),
                   default=None)
    p.add_argument("--len", dest="seq_len", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, help="number of seeds per grid point")
    p.add_argument("--t-sweep", dest="t_sweep", type=_float_list, default=None)
    p.add_argument("--d-sweep", dest="d_sweep", type=_int_list, default=None)
    p.add_argument("--fixed-d", dest="fixed_d", type=int, default=None)
    p.add_argument("--fixed-t", dest="fixed_t", type=float, default=None)

    return parser


def cmd_verify(args) -> int:
    opts = _resolve(args, {"seed": 0, "precision": "f64", "filter": None, "out": None})
    results = verify_mod.run_suites(opts["filter"], precision=opts["precision"])
    all_ok = True
    lines = []
    for name, failures in results:
        if failures:
            all_ok = False
            lines.append(f"FAIL {name}: {failures[0]}")
        else:
            lines.append(f"PASS {name}")
    lines.append(f"{sum(1 for _, f in results if not f)}/{len(results)} suites passed")
    text = "\n".join(lines)
    print(text)
    if opts["out"]:
        atomic_write_text(opts["out"], text + "\n")
    return 0 if all_ok else 1


def cmd_bench(args) -> int:
    opts = _resolve(
        args,
        {
            "seed": 0,
            "precision": "f32",
            "out": "bench.csv",
            "lengths": bench_mod.DEFAULT_LENGTHS,
            "channels": 128,
            "batch": 64,
            "reps": bench_mod.MIN_REPS,
            "direct_cap": bench_mod.DEFAULT_DIRECT_CAP,
            "impls": bench_mod.IMPLS,
        },
    )
    dtype = np.float64 if opts["precision"] == "f64" else np.float32
    records, summary = bench_mod.run_bench(
        lengths=opts["lengths"],
        channels=opts["channels"],
        batch=opts["batch"],
        reps=opts["reps"],
        impls=opts["impls"],
        direct_cap=opts["direct_cap"],
        dtype=dtype,
        seed=opts["seed"],
    )
    out = opts["out"]
    bench_mod.write_bench_csv(records, out)
    summary_path = os.path.splitext(str(out))[0] + ".json"
    bench_mod.write_bench_summary(summary, summary_path)
    for r in records:
        print(f"{r.impl:>15} L={r.seq_len:<6} median={r.median_ms:10.3f} ms "
              f"[p10 {r.p10_ms:.3f}, p90 {r.p90_ms:.3f}]")
    for impl, entry in summary["impls"].items():
        if "loglog_slope" in entry:
            print(f"{impl:>15} log-log slope: {entry['loglog_slope']:.3f}")
    print(f"wrote {out} and {summary_path}")
    return 0


def cmd_dump_kernel(args) -> int:
    opts = _resolve(
        args,
        {
            "seed": 0,
            "precision": "f64",
            "out": "kernel.csv",
            "seq_len": 4096,
            "scale_dim": 32,
            "decay_alpha": 0.5,
            "decay_t": 1.0,
            "channels": 1,
            "mode": "concat",
            "init": "gaussian",
        },
    )
    if opts["precision"] != "f64":
        print("dump-kernel always materializes in f64", file=sys.stderr)
        return 2
    cfg = KernelConfig(
        seq_len=opts["seq_len"],
        scale_dim=opts["scale_dim"],
        channels=opts["channels"],
        mode=opts["mode"],
        decay_alpha=opts["decay_alpha"],
        decay_t=opts["decay_t"],
        init=opts["init"],
        seed=opts["seed"],
    )
    _, kern = init_kernel(cfg, np.random.default_rng(opts["seed"]))
    write_kernel_csv(kern, opts["out"])
    print(f"wrote {opts['out']} ({cfg.channels} channels x {cfg.seq_len} positions, "
          f"{cfg.num_scales} scales)")
    return 0


def _task_from_opts(opts) -> tasks_mod.TaskSpec:
    kind = opts["task"].replace("-", "_")
    return tasks_mod.TaskSpec(
        kind=kind,
        seq_len=opts["seq_len"],
        num_classes=opts["classes"],
        seed=opts["seed"],
    )


def cmd_train(args) -> int:
    opts = _resolve(
        args,
        {
            "seed": 0,
            "precision": "f64",
            "out": "run",
            "task": "first-token-recall",
            "seq_len": 1024,
            "classes": 8,
            "steps": 500,
            "batch_size": 32,
            "lr": 3e-2,
            "optimizer": "adam",
            "channels": 32,
            "blocks": 1,
            "scale_dim": 8,
            "mode": "concat",
            "decay_alpha": 0.5,
            "decay_t": 1.0,
            "eval_every": 50,
            "resume": None,
        },
    )
    if opts["precision"] != "f64":
        print("train runs in f64", file=sys.stderr)
        return 2
    spec = _task_from_opts(opts)
    model_cfg = model_mod.ModelConfig.for_task(
        spec,
        channels=opts["channels"],
        n_blocks=opts["blocks"],
        scale_dim=opts["scale_dim"],
        mode=opts["mode"],
        decay_alpha=opts["decay_alpha"],
        decay_t=opts["decay_t"],
    )
    initial = None
    if opts["resume"]:
        initial, model_cfg = model_mod.load_checkpoint(opts["resume"])
    train_cfg = model_mod.TrainConfig(
        steps=opts["steps"],
        batch_size=opts["batch_size"],
        lr=opts["lr"],
        optimizer=opts["optimizer"],
        seed=opts["seed"],
        eval_every=opts["eval_every"],
    )
    try:
        result = model_mod.train(spec, model_cfg, train_cfg, state=initial)
    except model_mod.TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    log_path = f"{opts['out']}.jsonl"
    ckpt_path = f"{opts['out']}.ckpt"
    atomic_write_text(
        log_path, "\n".join(json.dumps(entry) for entry in result.log) + "\n"
    )
    model_mod.save_checkpoint(ckpt_path, result.state, result.model_cfg)
    first, last = result.log[0], result.log[-1]
    print(f"step {first['step']}: loss {first['loss']:.4f}, acc {first['acc']:.4f}")
    print(f"step {last['step']}: loss {last['loss']:.4f}, acc {last['acc']:.4f}")
    print(f"wrote {log_path} and {ckpt_path}")
    return 0


def cmd_ablate(args) -> int:
    opts = _resolve(
        args,
        {
            "seed": 0,
            "precision": "f64",
            "out": "ablation.csv",
            "task": "first-token-recall",
            "seq_len": 256,
            "classes": 8,
            "steps": 200,
            "batch_size": 32,
            "lr": 2e-2,
            "channels": 32,
            "seeds": 1,
            "t_sweep": DEFAULT_T_SWEEP,
            "d_sweep": DEFAULT_D_SWEEP,
            "fixed_d": DEFAULT_FIXED_D,
            "fixed_t": DEFAULT_FIXED_T,
        },
    )
    if opts["precision"] != "f64":
        print("ablate runs in f64", file=sys.stderr)
        return 2
    spec = _task_from_opts(opts)
    grid = [(t, opts["fixed_d"]) for t in opts["t_sweep"]]
    grid += [(opts["fixed_t"], d) for d in opts["d_sweep"]]
    train_cfg = model_mod.TrainConfig(
        steps=opts["steps"],
        batch_size=opts["batch_size"],
        lr=opts["lr"],
        eval_every=max(1, opts["steps"] // 2),
        seed=opts["seed"],
    )
    seeds = tuple(opts["seed"] + i for i in range(opts["seeds"]))
    rows = model_mod.ablate_decay(
        spec, grid, train_cfg, channels=opts["channels"], seeds=seeds
    )
    lines = ["t,d,accuracy,seed"]
    for row in rows:
        lines.append(f"{row['t']:g},{row['d']},{row['accuracy']:.6f},{row['seed']}")
    atomic_write_text(opts["out"], "\n".join(lines) + "\n")
    means: dict[tuple, list] = {}
    for row in rows:
        means.setdefault((row["t"], row["d"]), []).append(row["accuracy"])
    print("t      d    mean_acc  seeds")
    for (t, d), accs in means.items():
        print(f"{t:<6g} {d:<4d} {np.mean(accs):.4f}    {len(accs)}")
    print(f"wrote {opts['out']}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "verify": cmd_verify,
        "bench": cmd_bench,
        "dump-kernel": cmd_dump_kernel,
        "train": cmd_train,
        "ablate": cmd_ablate,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
