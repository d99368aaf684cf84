"""Command-line entry point: ``odenet train|predict|gradcheck|construct|evaluate|generate``.

Exit codes: 0 success, 1 configuration or user error, 2 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import knn_evaluate
from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_experiment, load_gradcheck, parse_matrix, read_matrix_file
from .construct import compile_resnet, read_shallow
from .core import ODENetSpec, ParamPath
from .data import classify, gen_circle, gen_sinusoid, load_csv_inputs, make_rng, save_csv_dataset
from .exceptions import CheckpointError, ConfigError, ConstructionError, DivergenceError, RankError, ShapeError
from .forward import predict
from .gradcheck import check_odenet
from .optimizer import MetricsWriter, evaluate, init_params, train
from .resnet import resnet_predict

log = logging.getLogger("odenet")

EXIT_OK = 0
EXIT_USER = 1
EXIT_DIVERGED = 2

USER_ERRORS = (ConfigError, CheckpointError, ConstructionError, RankError, ShapeError, OSError, ValueError)


def cmd_train(args) -> int:
    exp = load_experiment(args.config)
    out = Path(args.out_dir) if args.out_dir else Path("runs") / Path(args.config).stem
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"
    ckpt_path = out / "model.ckpt"

    def progress(record, state):
        writer(record)
        if not args.quiet:
            extra = "" if record.val_acc is None else f" val_acc {record.val_acc:.4f}"
            print(f"epoch {record.epoch} train_loss {record.train_loss:.6g}{extra}", flush=True)

    with MetricsWriter(metrics_path) as writer:
        try:
            state = train(exp.spec, init_params(exp.spec, exp.init), exp.train, exp.val, exp.optimizer, progress)
        except DivergenceError as exc:
            print(f"error: training diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
    save_checkpoint(ckpt_path, exp.spec, state.params)
    print(f"wrote {metrics_path} and {ckpt_path} after {state.epoch} epochs")
    return EXIT_OK


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    X = load_csv_inputs(args.input)
    n = ckpt.spec.n if ckpt.kind == "odenet" else ckpt.resnet.n
    if X.shape[1] != n:
        raise ShapeError(f"checkpoint expects {n} input columns, {args.input} has {X.shape[1]}")
    if ckpt.kind == "odenet":
        Y = predict(ckpt.spec, ckpt.params, X) if len(X) else np.empty((0, ckpt.spec.m))
    else:
        Y = resnet_predict(ckpt.resnet, X) if len(X) else np.empty((0, ckpt.resnet.m))
    header = [f"y{j}" for j in range(Y.shape[1])]
    rows = [[repr(float(v)) for v in y] for y in Y]
    if args.task in ("binary", "multiclass"):
        header.append("label")
        labels = classify(Y, args.task) if len(Y) else []
        rows = [r + [str(int(c))] for r, c in zip(rows, labels)]
    _write_rows(args.output, header, rows)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_gradcheck(args.config)
    rng = make_rng(cfg.seed)
    A = parse_matrix(cfg.A, cfg.m, cfg.n) if cfg.A else rng.standard_normal((cfg.m, cfg.n))
    spec = ODENetSpec(cfg.n, cfg.m, A, cfg.T, cfg.L, cfg.activation)
    params = ParamPath.random(spec, rng, cfg.scale)
    X = rng.standard_normal((cfg.K, cfg.n))
    F = rng.standard_normal((cfg.K, cfg.m))
    report = check_odenet(spec, params, X, F, cfg.step, cfg.rel_tol, cfg.abs_tol, cfg.scheme, corrupt=args.sabotage)
    print(report.format())
    return EXIT_OK if report.passed else EXIT_USER


def cmd_construct(args) -> int:
    net = read_shallow(args.shallow)
    A = read_matrix_file(args.A)
    resnet = compile_resnet(net, A)
    probes = make_rng(args.seed).standard_normal((args.probes, net.n))
    G = net(probes)
    err = float(np.max(np.abs(resnet_predict(resnet, probes) - G))) if args.probes else 0.0
    save_checkpoint(args.output, resnet)
    print(f"compiled {net.L} units into a depth-{resnet.L} ResNet")
    print(f"max reproduction error over {args.probes} probes: {err:.3e}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    exp = load_experiment(args.config)
    test = exp.val if exp.val is not None else exp.train
    if args.method == "knn":
        loss, acc = knn_evaluate(exp.train, test, args.k)
    else:
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required for --method odenet")
        ckpt = load_checkpoint(args.checkpoint)
        if ckpt.kind != "odenet":
            raise CheckpointError("evaluate expects an ODENet checkpoint")
        loss, acc = evaluate(ckpt.spec, ckpt.params, test)
    print(f"loss {loss!r}")
    if acc is not None:
        print(f"accuracy {acc!r}")
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.dataset == "sin":
        data = gen_sinusoid(args.K)
    else:
        data = gen_circle(args.K, args.seed)
    save_csv_dataset(data, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odenet", description="Train and verify ODENet models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run SGD training from a config file")
    p.add_argument("config")
    p.add_argument("--out-dir", help="where metrics.csv and model.ckpt go (default runs/<config name>)")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="evaluate a checkpoint on a CSV of inputs")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--task", choices=("regression", "binary", "multiclass"), default="regression")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="compare adjoint gradients with finite differences")
    p.add_argument("config")
    p.add_argument("--sabotage", action="store_true", help="flip the sign of the gamma gradient (test hook)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("construct", help="compile a shallow network into an exact ResNet checkpoint")
    p.add_argument("shallow")
    p.add_argument("A")
    p.add_argument("output")
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("evaluate", help="score a method on the config's validation data")
    p.add_argument("config")
    p.add_argument("--method", choices=("knn", "odenet"), default="knn")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    p.add_argument("dataset", choices=("sin", "circle"))
    p.add_argument("output")
    p.add_argument("--K", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
