"""Command-line entry point: generate | train | eval | stream | latency | bench.

Every failure prints a single line ``error:<kind>: <message>`` on stderr
and exits nonzero:

    2 usage (bad arguments or topology string)   3 data
    4 config                                     5 file format
    6 stream state
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint, data, grad, lfr
from .errors import ConfigError, DataError, FormatError, ParseError, ShapeError, StreamStateError
from .layers import forward, init_model
from .stream import stream_open
from .tensor import resolve_dtype
from .topology import latency_frames, latency_ms, layer_macs, param_count, parse_topology, receptive_field

EXIT_USAGE, EXIT_DATA, EXIT_CONFIG, EXIT_FORMAT, EXIT_STATE = 2, 3, 4, 5, 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _precision(flag: str | None) -> np.dtype:
    return resolve_dtype(os.environ.get("FSMN_PRECISION") or flag or "f32")


def _topology(text: str):
    try:
        return parse_topology(text)
    except (ParseError, ConfigError) as exc:
        raise UsageError(f"topology: {exc}") from None


def _emit(record: dict, out=None) -> None:
    print(json.dumps(record), file=out or sys.stdout, flush=True)


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    task = data.TaskSpec(
        kind=args.task,
        lag=args.lag,
        num_sequences=args.num_sequences,
        frames_per_sequence=args.frames,
        feature_dim=args.feature_dim,
        num_classes=args.num_classes,
        noise_std=args.noise_std,
        seed=args.seed,
    )
    ds = data.generate(task)
    data.save_dataset(ds, args.out)
    _emit({"out": str(args.out), "sequences": len(ds), "frames": ds.num_frames})
    return 0


def cmd_train(args) -> int:
    spec = _topology(args.topology)
    ds = data.load_dataset(args.data)
    cfg = grad.TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        minibatch_frames=args.minibatch_frames,
        epochs=args.epochs,
        seed=args.seed,
        lfr_factor=args.lfr,
        halve_on_plateau=args.halve_on_plateau,
    )
    model = init_model(spec, seed=args.seed, dtype=_precision(args.precision))
    metrics_path = Path(args.metrics) if args.metrics else Path(str(args.out) + ".metrics.jsonl")
    with open(metrics_path, "w") as metrics:

        def on_epoch(entry):
            _emit(entry)
            _emit(entry, metrics)

        model, trace = grad.train(model, ds, cfg, on_epoch=on_epoch)
    checkpoint.save_checkpoint(model, args.out)
    if args.plot:
        from .plotting import plot_training_trace

        plot_training_trace(trace, args.plot)
    return 0


def cmd_eval(args) -> int:
    model = checkpoint.load_checkpoint(args.ckpt)
    override = os.environ.get("FSMN_PRECISION")
    if override:
        model = model.astype(resolve_dtype(override))
    ds = data.load_dataset(args.data)
    prepared = lfr.prepare(ds, model.spec, args.lfr, dtype=model.dtype)
    loss, acc, frames = grad.evaluate(model, prepared)
    _emit({"loss": loss, "accuracy": acc, "frames": frames})
    return 0


def _read_stream_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def cmd_stream(args) -> int:
    model = checkpoint.load_checkpoint(args.ckpt)
    override = os.environ.get("FSMN_PRECISION")
    if override:
        model = model.astype(resolve_dtype(override))
    ds = data.loads_dataset(_read_stream_input(args.data))
    out = sys.stdout
    header = ["seq", "frame", "argmax"]
    if args.posteriors:
        header += [f"p{k}" for k in range(model.spec.output_dim)]
    print("\t".join(header), file=out)
    for n, (feats, _) in enumerate(ds.sequences):
        state = stream_open(model)
        emissions = []
        for frame in feats:
            emissions.extend(state.push(frame))
        emissions.extend(state.flush())
        for idx, row in emissions:
            fields = [str(n), str(idx), str(int(np.argmax(row)))]
            if args.posteriors:
                fields += [repr(float(v)) for v in row]
            print("\t".join(fields), file=out)
    return 0


def cmd_latency(args) -> int:
    spec = _topology(args.topology)
    if not args.frame_period_ms > 0:
        raise ConfigError(f"frame period must be positive, got {args.frame_period_ms}")
    lat = latency_frames(spec)
    past, future = receptive_field(spec)
    blocks_ms = latency_ms(spec, args.frame_period_ms)
    total_ms = lat.total * args.frame_period_ms
    print(
        f"{lat.blocks} frames / {blocks_ms:g} ms (blocks), +{lat.stacking} stacking, "
        f"total {lat.total} frames / {total_ms:g} ms"
    )
    print(f"receptive field: {past} past, {future} future frames")
    if args.plot:
        from .plotting import plot_latency

        plot_latency(spec, args.plot, args.frame_period_ms)
    return 0


def cmd_bench(args) -> int:
    spec = _topology(args.topology)
    if args.frames < 1 or args.repeats < 1:
        raise ConfigError("--frames and --repeats must be positive")
    dtype = _precision(args.precision)
    model = init_model(spec, seed=args.seed, dtype=dtype)
    x = np.random.default_rng(args.seed).standard_normal((args.frames, spec.stacked_dim)).astype(dtype)
    rates = []
    for _ in range(args.repeats):
        start = time.perf_counter()
        forward(model, x)
        rates.append(args.frames / (time.perf_counter() - start))
    macs = layer_macs(spec)
    for name, m in macs:
        print(f"macs\t{name}\t{m}")
    print(f"macs_per_frame\t{sum(m for _, m in macs)}")
    print(f"params\t{param_count(spec)}")
    print(f"frames_per_second\t{np.median(rates):.1f}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dfsmn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic task dataset")
    g.add_argument("--task", required=True, choices=data.TASKS)
    g.add_argument("--lag", type=int, required=True, help="echo delay, cue lead, or parity window")
    g.add_argument("--num-sequences", type=int, default=16)
    g.add_argument("--frames", type=int, default=200, help="frames per sequence")
    g.add_argument("--feature-dim", type=int, default=8)
    g.add_argument("--num-classes", type=int, default=4)
    g.add_argument("--noise-std", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model with SGD and momentum")
    t.add_argument("--topology", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=1)
    t.add_argument("--lr", type=float, default=1e-5)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--minibatch-frames", type=int, default=4096)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lfr", type=int, default=1, help="frame-rate reduction factor")
    t.add_argument("--halve-on-plateau", action="store_true")
    t.add_argument("--precision", choices=("f32", "f64"))
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--metrics", help="JSON-lines trace (default: <out>.metrics.jsonl)")
    t.add_argument("--plot", help="write a training-curve figure to this path")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="frame-level loss and accuracy of a checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--lfr", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stream", help="frame-by-frame inference over a dataset file")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", default="-", help="dataset file, '-' for stdin")
    s.add_argument("--posteriors", action="store_true", help="also print posterior rows")
    s.set_defaults(func=cmd_stream)

    lat = sub.add_parser("latency", help="lookahead latency of a topology")
    lat.add_argument("--topology", required=True)
    lat.add_argument("--frame-period-ms", type=float, default=10.0)
    lat.add_argument("--plot", help="write a per-layer latency figure to this path")
    lat.set_defaults(func=cmd_latency)

    b = sub.add_parser("bench", help="forward throughput and MAC counts")
    b.add_argument("--topology", required=True)
    b.add_argument("--frames", type=int, default=1000)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--precision", choices=("f32", "f64"))
    b.set_defaults(func=cmd_bench)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    print(f"error:{kind}: {message}".replace("\n", " "), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except FormatError as exc:
        return _fail("format", str(exc), EXIT_FORMAT)
    except (DataError, ShapeError) as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except StreamStateError as exc:
        return _fail("state", str(exc), EXIT_STATE)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); stop quietly
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except OSError as exc:
        return _fail("io", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
