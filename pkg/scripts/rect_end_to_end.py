"""Generated rectangles: 1-layer CAE pretraining then supervised fine-tuning."""
import argparse
import time

from cae.experiments import rect_end_to_end


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--lam", type=float, default=0.1)
    ap.add_argument("--hidden", type=int, default=100)
    args = ap.parse_args()
    for seed in args.seeds:
        start = time.perf_counter()
        err, best_val = rect_end_to_end(seed, lam=args.lam, hidden=args.hidden)
        print(f"seed {seed}: test error {err:.4f}  best validation {best_val:.4f}"
              f"  ({time.perf_counter() - start:.0f}s)")


if __name__ == "__main__":
    main()
