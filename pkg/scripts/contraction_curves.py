"""Contraction curves of AE, CAE (several lambdas) and a 2-layer CAE stack on one dataset."""
import argparse
from pathlib import Path

from cae.analysis import ContractionConfig, contraction_curve
from cae.experiments import TrendProtocol, digits_subset, mnist_subset
from cae.model import LossKind, ObjectiveSpec
from cae.trainer import Stack, TrainConfig, stack_pretrain


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", choices=["mnist", "digits"], default="digits")
    ap.add_argument("--mnist-dir")
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.1, 1.0])
    ap.add_argument("--points", type=int, default=100)
    ap.add_argument("--out", default="results/contraction")
    args = ap.parse_args()

    if args.dataset == "mnist":
        train, valid = mnist_subset(1000, 500, args.mnist_dir)
    else:
        train, valid = digits_subset(1000, 500)
    p = TrendProtocol()
    cfg = ContractionConfig.default(train, p.seed, points_per_radius=args.points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def config(variant, level):
        return TrainConfig(p.epochs, p.batch_size, p.learning_rate, p.seed,
                           ObjectiveSpec(variant, level, LossKind.CROSS_ENTROPY))

    models = {"ae": Stack(stack_pretrain(train, [p.hidden], config("ae", 0.0)).layers)}
    for lam in args.lambdas:
        two = stack_pretrain(train, [p.hidden, p.hidden], config("cae", lam))
        models[f"cae{lam:g}"] = Stack(two.layers[:1])
        models[f"cae{lam:g}_2layer"] = two
    for name, model in models.items():
        report = contraction_curve(model, valid, cfg)
        report.write_csv(out / f"{name}.csv")
        print(name, " ".join(f"{v:.3f}" for v in report.mean_ratio))


if __name__ == "__main__":
    main()
