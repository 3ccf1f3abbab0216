"""Command line front end.

One command per process: ``train``, ``predict``, ``convert``, and
``bench gemm``/``bench conv``. Exit codes are stable so scripts can
branch on them:

    0  success
    1  usage errors (bad flags, bad dimensions, bad thread counts)
    2  data errors (missing/corrupt dataset or model files)
    3  internal invariant failures (non-finite loss, checksum or
       equivalence mismatches, mode/state conflicts)

Thread count for the parallel kernel comes from ``--workers`` when
given, else the ``BMX_THREADS`` environment variable, else the CPU
count. All file outputs are written to a temp file and renamed into
place so an interrupted run never leaves a half-written artifact.
Everything except wall-clock benchmark fields is deterministic under a
fixed ``--seed``.
"""

import argparse
import os
import sys

import numpy as np

from . import gemm, mnist, modelio
from .gemm import DEFAULT_BLOCK_ROWS, DEFAULT_BLOCK_WORDS, GemmDims, KERNEL_IDS
from .layers import INFER_FLOAT, INFER_PACKED, ModeError, build_lenet, evaluate
from .mnist import IdxFormatError
from .modelio import ModelFormatError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

# Refuse benchmark problems whose operands would dwarf the machine.
MAX_BENCH_BYTES = 8 << 30

METRICS_HEADER = "epoch,train_loss,test_acc"


class UsageError(Exception):
    pass


class InternalCheckError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _write_text_atomic(path, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _parse_kernels(raw: str):
    if raw == "all":
        return list(KERNEL_IDS)
    kernels = [k.strip() for k in raw.split(",") if k.strip()]
    for k in kernels:
        if k not in KERNEL_IDS:
            raise UsageError(f"unknown kernel {k!r}; choose from {', '.join(KERNEL_IDS)}")
    if not kernels:
        raise UsageError("no kernels selected")
    return kernels


def _resolve_workers(args):
    try:
        return gemm.resolve_workers(args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> _Parser:
    parser = _Parser(prog="bitnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an MNIST classifier")
    p_train.add_argument("--data-dir", required=True)
    p_train.add_argument("--out", required=True, help="model file to write")
    p_train.add_argument("--binary", action="store_true",
                         help="use 1-bit weight layers (default full precision)")
    p_train.add_argument("--epochs", type=int, default=10)
    p_train.add_argument("--batch-size", type=int, default=100)
    p_train.add_argument("--lr", type=float, default=0.01)
    p_train.add_argument("--momentum", type=float, default=0.9)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--subset", type=int, default=None,
                         help="train on the first N examples only")
    p_train.add_argument("--metrics", default=None,
                         help="also write the per-epoch CSV to this file")
    p_train.set_defaults(func=cmd_train)

    p_pred = sub.add_parser("predict", help="classify one image with a saved model")
    p_pred.add_argument("--model", required=True)
    src = p_pred.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", help="raw 28x28 grayscale bytes")
    src.add_argument("--data-dir", help="read a sample from a dataset directory")
    p_pred.add_argument("--split", choices=("train", "test"), default="test")
    p_pred.add_argument("--index", type=int, default=0)
    p_pred.add_argument("--mode", choices=("auto", "float", "packed"), default="auto")
    p_pred.set_defaults(func=cmd_predict)

    p_conv = sub.add_parser("convert", help="bit-pack a trained model's 1-bit layers")
    p_conv.add_argument("--in", dest="in_path", required=True)
    p_conv.add_argument("--out", dest="out_path", required=True)
    p_conv.add_argument("--verify", type=int, default=0, metavar="N",
                        help="check float/packed agreement on N random inputs")
    p_conv.add_argument("--seed", type=int, default=0)
    p_conv.set_defaults(func=cmd_convert)

    p_bench = sub.add_parser("bench", help="time the GEMM kernels")
    bench_sub = p_bench.add_subparsers(dest="bench_command", required=True)

    def add_common_bench(p):
        p.add_argument("--kernels", default="all",
                       help=f"comma list from: {', '.join(KERNEL_IDS)}")
        p.add_argument("--repeats", type=int, default=5)
        p.add_argument("--warmup", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--csv", default=None, help="also write records to this file")
        p.add_argument("--block-rows", type=int, default=DEFAULT_BLOCK_ROWS)
        p.add_argument("--block-words", type=int, default=DEFAULT_BLOCK_WORDS)
        p.add_argument("--workers", type=int, default=None)

    p_gemm = bench_sub.add_parser("gemm", help="one problem size")
    p_gemm.add_argument("-M", type=int, required=True)
    p_gemm.add_argument("-N", type=int, required=True)
    p_gemm.add_argument("-K", type=int, required=True)
    add_common_bench(p_gemm)
    p_gemm.set_defaults(func=cmd_bench_gemm)

    p_conv_b = bench_sub.add_parser(
        "conv", help="sweep convolution-shaped problems over input channels"
    )
    p_conv_b.add_argument("--channels", default="32,64,128,256",
                          help="comma list of input channel counts")
    p_conv_b.add_argument("--filters", type=int, default=64)
    p_conv_b.add_argument("--kernel-size", type=int, default=5)
    p_conv_b.add_argument("--batch", type=int, default=200)
    p_conv_b.add_argument("--out-hw", type=int, default=8,
                          help="output feature map height and width")
    add_common_bench(p_conv_b)
    p_conv_b.set_defaults(func=cmd_bench_conv)

    return parser


def cmd_train(args) -> int:
    if args.epochs < 0 or args.batch_size < 1:
        raise UsageError("epochs must be >= 0 and batch-size >= 1")
    if args.subset is not None and args.subset < 1:
        raise UsageError("subset must be >= 1")
    train = mnist.load_dataset(args.data_dir, "train")
    test = mnist.load_dataset(args.data_dir, "test")
    images, labels = train.images, train.labels
    if args.subset is not None:
        images, labels = images[: args.subset], labels[: args.subset]

    net = build_lenet(binary=args.binary, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    lines = [METRICS_HEADER]
    print(METRICS_HEADER, flush=True)
    best_acc = -1.0
    best = net.snapshot()
    n = len(labels)
    for epoch in range(1, args.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, args.batch_size):
            sel = order[lo : lo + args.batch_size]
            loss = net.train_step(images[sel], labels[sel], args.lr, args.momentum)
            total += loss * len(sel)
        acc = evaluate(net, test.images, test.labels, INFER_FLOAT)
        line = f"{epoch},{total / n:.6f},{acc:.4f}"
        lines.append(line)
        print(line, flush=True)
        if acc > best_acc:
            best_acc = acc
            best = net.snapshot()
    net.restore(best)
    net.clear_caches()
    modelio.save_model(net, args.out)
    if args.metrics:
        _write_text_atomic(args.metrics, "\n".join(lines) + "\n")
    print(f"saved {args.out}" + (f" (best test_acc {best_acc:.4f})" if args.epochs else ""),
          file=sys.stderr)
    return EXIT_OK


def _load_predict_input(args, input_shape):
    if args.image is not None:
        want = int(np.prod(input_shape))
        with open(args.image, "rb") as fh:
            raw = fh.read()
        if len(raw) != want:
            raise IdxFormatError(
                f"{args.image}: expected {want} raw grayscale bytes, got {len(raw)}"
            )
        arr = np.frombuffer(raw, dtype=np.uint8).astype(np.float32) / 255.0
        return arr.reshape(1, *input_shape), None
    ds = mnist.load_dataset(args.data_dir, args.split)
    if not (0 <= args.index < len(ds)):
        raise IdxFormatError(f"index {args.index} outside dataset of {len(ds)}")
    return ds.images[args.index : args.index + 1], int(ds.labels[args.index])


def cmd_predict(args) -> int:
    net = modelio.load_model(args.model)
    packed_only = any(l.weight is None for l in net.quantized_layers)
    if args.mode == "auto":
        mode = INFER_PACKED if (net.quantized_layers and packed_only) else INFER_FLOAT
    elif args.mode == "packed":
        mode = INFER_PACKED
    else:
        mode = INFER_FLOAT
    x, truth = _load_predict_input(args, net.input_shape)
    probs = net.predict(x, mode)[0]
    print(f"class,{int(probs.argmax())}")
    print("probs," + ",".join(f"{p:.6f}" for p in probs))
    if truth is not None:
        print(f"label,{truth}")
    return EXIT_OK


def cmd_convert(args) -> int:
    report = modelio.convert(args.in_path, args.out_path)
    print("tensor,float_bytes,packed_bytes,ratio")
    for row in report.layers:
        print(f"{row['name']},{row['float_bytes']},{row['packed_bytes']},{row['ratio']:.2f}")
    print(f"total,{report.bytes_before},{report.bytes_after},{report.ratio:.2f}")
    if args.verify:
        float_net = modelio.load_model(args.in_path)
        packed_net = modelio.load_model(args.out_path)
        ok = modelio.verify_equivalence(float_net, packed_net, args.verify, args.seed)
        print(f"verify,{'ok' if ok else 'fail'}")
        if not ok:
            raise InternalCheckError("packed model disagrees with float model")
    return EXIT_OK


def _run_bench(dims_list, args) -> int:
    kernels = _parse_kernels(args.kernels)
    workers = _resolve_workers(args)
    if args.repeats < 1 or args.warmup < 0:
        raise UsageError("repeats must be >= 1 and warmup >= 0")
    if args.block_rows < 1 or args.block_words < 1:
        raise UsageError("tile sizes must be positive")
    for dims in dims_list:
        if dims.operand_bytes > MAX_BENCH_BYTES:
            raise UsageError(
                f"M={dims.m} N={dims.n} K={dims.k} needs about "
                f"{dims.operand_bytes >> 20} MiB; refusing (limit {MAX_BENCH_BYTES >> 20} MiB)"
            )
    records = []
    for dims in dims_list:
        group = [
            gemm.benchmark_kernel(
                kernel, dims,
                repeats=args.repeats, warmup=args.warmup, seed=args.seed,
                block_rows=args.block_rows, block_words=args.block_words,
                workers=workers,
            )
            for kernel in kernels
        ]
        if len({r.checksum for r in group}) != 1:
            raise InternalCheckError(
                f"kernel outputs disagree at M={dims.m} N={dims.n} K={dims.k}: "
                + ", ".join(f"{r.kernel}={r.checksum}" for r in group)
            )
        records.extend(group)
        base = next((r for r in group if r.kernel == "naive_f32"), None)
        if base is not None:
            for r in group:
                if r.kernel != "naive_f32":
                    print(
                        f"# K={dims.k}: {r.kernel} speedup {base.median_ns / r.median_ns:.1f}x",
                        file=sys.stderr,
                    )
    csv_text = gemm.records_to_csv(records)
    print(csv_text, end="")
    if args.csv:
        _write_text_atomic(args.csv, csv_text)
    return EXIT_OK


def cmd_bench_gemm(args) -> int:
    try:
        dims = GemmDims(args.M, args.N, args.K)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return _run_bench([dims], args)


def cmd_bench_conv(args) -> int:
    try:
        channels = [int(c) for c in args.channels.split(",") if c.strip()]
    except ValueError:
        raise UsageError(f"bad --channels list {args.channels!r}") from None
    if not channels:
        raise UsageError("no channel values given")
    n = args.batch * args.out_hw * args.out_hw
    try:
        dims_list = [
            GemmDims(args.filters, n, c * args.kernel_size * args.kernel_size)
            for c in channels
        ]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return _run_bench(dims_list, args)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IdxFormatError, ModelFormatError, FileNotFoundError, NotADirectoryError,
            IsADirectoryError, PermissionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InternalCheckError, ModeError, FloatingPointError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # anything else is a broken invariant, not usage
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
