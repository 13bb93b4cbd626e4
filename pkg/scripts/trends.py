"""AE vs validation-selected CAE: Jacobian norm, saturation, reconstruction, spectrum, depth.

    python3 scripts/trends.py --dataset mnist --mnist-dir data/mnist --out results/trends
    python3 scripts/trends.py --dataset digits --out results/digits
"""
import argparse
import csv
import json
from pathlib import Path

from cae.experiments import TrendProtocol, depth_comparison, digits_subset, mnist_subset, trend_run
from cae.model import save_json


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--dataset", choices=["mnist", "digits"], default="mnist")
    ap.add_argument("--mnist-dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/trends")
    args = ap.parse_args()

    if args.dataset == "mnist":
        train, valid = mnist_subset(1000, 500, args.mnist_dir)
    else:
        train, valid = digits_subset(1000, 500)
    protocol = TrendProtocol(seed=args.seed)
    run = trend_run(train, valid, protocol)
    radius, one, two = depth_comparison(train, valid, run.lam, protocol)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_json(run.ae, out / "ae.json")
    save_json(run.cae, out / "cae.json")
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        names = list(run.metrics["ae"])
        w.writerow(["model"] + names)
        for model, values in run.metrics.items():
            w.writerow([model] + [repr(values[k]) for k in names])
    summary = {"dataset": args.dataset, "lambda": run.lam,
               "validation_errors": {str(k): v for k, v in run.validation_errors.items()},
               "depth": {"radius": radius, "one_layer": one, "two_layer": two}}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))

    ae, cae = run.metrics["ae"], run.metrics["cae"]
    print(f"selected lambda {run.lam} (validation errors {run.validation_errors})")
    for key in ae:
        print(f"{key:>18}: AE {ae[key]:.4f}  CAE {cae[key]:.4f}  ratio {cae[key] / ae[key]:.3f}")
    print(f"contraction at r={radius:.3f}: 1-layer {one:.4f}  2-layer {two:.4f}")


if __name__ == "__main__":
    main()
