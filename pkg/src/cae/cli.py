"""Command-line entry point: `cae <command> ...`.

Exit codes: 0 success, 1 runtime failure (bad files, divergence, failed
verification), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (ContractionConfig, average_jacobian_norm, contraction_curve,
                       jacobian_spectrum, saturation_fraction, write_metrics_csv)
from .dae_link import clean_cost, taylor_gap
from .data import (DataFormatError, Dataset, gen_rect, load_amat, load_idx, save_amat,
                   write_idx, write_idx_labels)
from .model import FORMAT_VERSION, LossKind, ObjectiveSpec, TiedAutoEncoder, load_model, save_json
from .numerics import RNG_ALGORITHM, make_rng
from .trainer import (Mlp, Stack, TrainConfig, TrainingError, evaluate, finetune, pretrain_layer,
                      pretrain_rbm, stack_pretrain, write_log)
from .verify import gradcheck, hessian_check, identity_network, random_net, toy_taylor_setup

GRAD_TOL = 1e-6
HESS_TOL = 1e-4


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _pos(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _fraction(text: str) -> float:
    v = _nonneg(text)
    if v > 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _count(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["rng"] = RNG_ALGORITHM
    cfg["format_version"] = FORMAT_VERSION
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n")


def _load_data(path, labels=None) -> Dataset:
    if labels is not None or not str(path).endswith(".amat"):
        return load_idx(path, labels)
    return load_amat(path)


def _objective(args) -> ObjectiveSpec:
    level = {"ae": 0.0, "ae-wd": args.lam, "cae": args.lam, "dae-g": args.sigma,
             "dae-b": args.nu}[args.objective]
    return ObjectiveSpec(args.objective, level, args.loss)


def _train_config(args, objective=None) -> TrainConfig:
    return TrainConfig(args.epochs, args.batch_size, args.lr, args.seed,
                       objective or ObjectiveSpec(), True, getattr(args, "cd_k", 1))


def cmd_gen(args) -> int:
    out = _out_dir(args)
    if args.what == "rect":
        save_amat(out / "rect.amat", gen_rect(args.n, args.side, args.seed))
    else:
        ds = gen_rect(args.n, max(args.side, 8), args.seed)
        pixels = np.rint(ds.features * 255).astype(np.uint8)
        write_idx(out / "images-idx3-ubyte", pixels, args.side, args.side)
        write_idx_labels(out / "labels-idx1-ubyte", ds.labels)
    _echo_config(out, args)
    return 0


def cmd_pretrain(args) -> int:
    data = _load_data(args.data, args.labels)
    out = _out_dir(args)
    log: list = []
    if args.objective == "rbm":
        model = pretrain_rbm(data, args.hidden, _train_config(args), log)
    else:
        model = pretrain_layer(data, args.hidden, _train_config(args, _objective(args)), log)
    save_json(model, out / "model.json")
    write_log(out / "train_log.csv", log)
    _echo_config(out, args)
    return 0


def cmd_stack(args) -> int:
    data = _load_data(args.data, args.labels)
    out = _out_dir(args)
    logs: list = []
    if args.objective == "rbm":
        stack = stack_pretrain(data, args.hidden, _train_config(args), logs, kind="rbm")
    else:
        stack = stack_pretrain(data, args.hidden, _train_config(args, _objective(args)), logs)
    save_json(stack, out / "stack.json")
    for k, log in enumerate(logs, start=1):
        write_log(out / f"train_log_layer{k}.csv", log)
    _echo_config(out, args)
    return 0


def cmd_finetune(args) -> int:
    data = _load_data(args.data, args.labels)
    if data.labels is None:
        raise DataFormatError("fine-tuning data has no labels")
    valid = _load_data(args.validation, args.validation_labels) if args.validation else None
    out = _out_dir(args)
    stack = None
    if args.model:
        model = load_model(args.model)
        stack = model if isinstance(model, Stack) else Stack([model])
    n_classes = max(data.num_classes, valid.num_classes if valid else 0, 2)
    mlp = Mlp.from_stack(stack, data.dim, n_classes, make_rng(args.seed))
    log: list = []
    mlp = finetune(mlp, data, _train_config(args), log, valid)
    save_json(mlp, out / "mlp.json")
    write_log(out / "finetune_log.csv", log, validation=valid is not None)
    _echo_config(out, args)
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    data = _load_data(args.data, args.labels)
    if isinstance(model, Mlp):
        print(repr(evaluate(model, data)))
    elif isinstance(model, TiedAutoEncoder):
        # unsupervised model: report its mean reconstruction cost instead
        print(repr(clean_cost(model, data, LossKind(args.loss))))
    else:
        raise ValueError(f"cannot evaluate a {model.kind} model")
    return 0


def cmd_analyze(args) -> int:
    model = load_model(args.model)
    data = _load_data(args.data, args.labels)
    if args.limit:
        data = data.subset(slice(0, args.limit))
    out = _out_dir(args)
    if args.what == "metrics":
        write_metrics_csv(out / "metrics.csv", average_jacobian_norm(model, data, args.threads),
                          saturation_fraction(model, data))
    elif args.what == "spectrum":
        jacobian_spectrum(model, data, args.threads).write_csv(out / "spectrum.csv")
    else:
        if args.radii:
            cfg = ContractionConfig(args.radii, args.points, args.directions, args.seed)
        else:
            cfg = ContractionConfig.default(data, args.seed, points_per_radius=args.points,
                                            directions_per_point=args.directions)
        contraction_curve(model, data, cfg, args.threads).write_csv(out / "contraction.csv")
    _echo_config(out, args)
    return 0


def cmd_verify(args) -> int:
    out = _out_dir(args)
    ok = True
    if args.what == "gradcheck":
        rows = gradcheck(args.nets, seed=args.seed)
        with open(out / "gradcheck.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "loss", "net", "rel_error", "pass"])
            for variant, loss, k, err in rows:
                w.writerow([variant, loss, k, repr(err), int(err < GRAD_TOL)])
                ok &= err < GRAD_TOL
    elif args.what == "taylor":
        if args.model:
            ae, data = load_model(args.model), _load_data(args.data, args.labels)
        else:
            ae, data = toy_taylor_setup(args.seed)
        report = taylor_gap(ae, data, LossKind(args.loss), args.sigma, args.samples,
                            make_rng(args.seed + 1))
        report.write_csv(out / "taylor_report.csv")
        ok = report.within_tolerance() and not report.flagged
        print(f"gap={report.gap!r} prediction={report.prediction!r} "
              f"stderr={report.stderr!r} ratio={report.ratio!r}")
    else:
        rng = make_rng(args.seed)
        if args.network == "identity":
            cases = [(identity_network(args.dim), rng.uniform(0, 1, args.dim))]
        else:
            cases = [(random_net(rng, args.dim, 3, scale=1.0), rng.uniform(0, 1, args.dim))
                     for _ in range(args.nets)]
        with open(out / "hessian_trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "trace_corrected", "trace_literal_form", "residual_term", "jac_term",
                        "finite_difference", "corrected_pass", "literal_form_matches"])
            for k, (ae, x) in enumerate(cases):
                parts, fd = hessian_check(ae, x)
                good = abs(parts.trace_corrected - fd) <= HESS_TOL * max(abs(fd), 1.0)
                literal = abs(parts.trace_literal_form - fd) <= HESS_TOL * max(abs(fd), 1.0)
                w.writerow([k, repr(parts.trace_corrected), repr(parts.trace_literal_form),
                            repr(parts.residual_term), repr(parts.jac_term), repr(fd),
                            int(good), int(literal)])
                ok &= good
                if not literal:
                    print(f"case {k}: literal form {parts.trace_literal_form!r} differs from "
                          f"true trace {fd!r}")
    _echo_config(out, args)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _data_args(p, required=True) -> None:
    p.add_argument("--data", required=required, help="amat file, or IDX images file")
    p.add_argument("--labels", help="IDX labels file (with IDX --data)")


def _train_args(p, epochs=50, lr=0.005) -> None:
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=_count, default=20)
    p.add_argument("--lr", type=_pos, default=lr, help="step size on summed minibatch gradients")
    p.add_argument("--seed", type=int, default=0)


def _objective_args(p) -> None:
    p.add_argument("--objective", choices=["ae", "ae-wd", "cae", "dae-g", "dae-b", "rbm"],
                   default="cae")
    p.add_argument("--lambda", dest="lam", type=_nonneg, default=0.1)
    p.add_argument("--sigma", type=_nonneg, default=0.3)
    p.add_argument("--nu", type=_fraction, default=0.25)
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="cross_entropy")
    p.add_argument("--cd-k", type=_count, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cae", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"cae {__version__} (model format_version {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate datasets")
    p.add_argument("what", choices=["rect", "idx-fixture"])
    p.add_argument("--n", type=_count, required=True)
    p.add_argument("--side", type=int, default=28)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pretrain", help="train one feature layer")
    _data_args(p)
    _objective_args(p)
    p.add_argument("--hidden", type=_count, default=50)
    _train_args(p)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("stack", help="greedy layer-wise pretraining")
    _data_args(p)
    _objective_args(p)
    p.add_argument("--hidden", type=_count, nargs="+", default=[50, 50])
    _train_args(p)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("finetune", help="supervised fine-tuning of an MLP")
    _data_args(p)
    p.add_argument("--model", help="pretrained layer or stack JSON (omit for no pretraining)")
    p.add_argument("--validation")
    p.add_argument("--validation-labels")
    _train_args(p, epochs=100, lr=0.05)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="print error rate (MLP) or reconstruction cost (auto-encoder)")
    p.add_argument("--model", required=True)
    _data_args(p)
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="cross_entropy")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="contraction analysis reports")
    p.add_argument("what", choices=["spectrum", "contraction", "metrics"])
    p.add_argument("--model", required=True)
    _data_args(p)
    p.add_argument("--limit", type=_count, help="use only the first N examples")
    p.add_argument("--radii", type=_pos, nargs="+")
    p.add_argument("--points", type=_count, default=100)
    p.add_argument("--directions", type=_count, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_count, default=1)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("verify", help="numerical verification suite")
    p.add_argument("what", choices=["gradcheck", "taylor", "hessian-trace"])
    p.add_argument("--nets", type=_count, default=10)
    p.add_argument("--sigma", type=_pos, default=0.01)
    p.add_argument("--samples", type=_count, default=1_000_000)
    p.add_argument("--loss", choices=[k.value for k in LossKind], default="squared_error")
    p.add_argument("--network", choices=["identity", "random"], default="random")
    p.add_argument("--dim", type=_count, default=5)
    p.add_argument("--model")
    _data_args(p, required=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, TrainingError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
