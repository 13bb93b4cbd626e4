"""Gaussian-noise cost gap vs its second-order prediction over a range of noise levels."""
import argparse

from cae.dae_link import taylor_gap
from cae.model import LossKind
from cae.numerics import make_rng
from cae.verify import toy_taylor_setup


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.1, 0.03, 0.01, 0.005])
    ap.add_argument("--samples", type=int, default=1_000_000)
    ap.add_argument("--loss", choices=[k.value for k in LossKind], default="squared_error")
    args = ap.parse_args()
    ae, data = toy_taylor_setup()
    for sigma in args.sigmas:
        r = taylor_gap(ae, data, LossKind(args.loss), sigma, args.samples, make_rng(1))
        print(f"sigma {sigma:<6} gap {r.gap:.3e}  prediction {r.prediction:.3e}  ratio {r.ratio:.4f}"
              f"  stderr {r.stderr:.1e}  within={r.within_tolerance()}")


if __name__ == "__main__":
    main()
