"""Desk-scale experiment protocols shared by the scripts and the acceptance suite."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (ContractionConfig, average_jacobian_norm, contraction_curve,
                       jacobian_spectrum, median_pairwise_distance, saturation_fraction)
from .dae_link import clean_cost
from .data import Dataset, gen_rect, load_idx
from .model import LossKind, ObjectiveSpec, TiedAutoEncoder
from .numerics import make_rng
from .trainer import (Mlp, Stack, TrainConfig, evaluate, finetune, pretrain_layer,
                      select_by_validation, stack_pretrain)

LEVELS = (0.01, 0.1, 1.0)
MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")


def find_mnist(directory=None) -> tuple[Path, Path] | None:
    """Locate MNIST training IDX files (optionally gzipped) under `directory`.

    Defaults to $CAE_MNIST_DIR, then ./data/mnist.
    """
    root = Path(directory or os.environ.get("CAE_MNIST_DIR", "data/mnist"))
    found = []
    for name in MNIST_FILES:
        for cand in (root / name, root / f"{name}.gz", root / name.replace("-idx", ".idx")):
            if cand.exists():
                found.append(cand)
                break
        else:
            return None
    return found[0], found[1]


def mnist_subset(n_train: int = 1000, n_valid: int = 500, directory=None):
    paths = find_mnist(directory)
    if paths is None:
        raise FileNotFoundError(
            "MNIST training IDX files not found; set CAE_MNIST_DIR to a directory holding "
            + " and ".join(MNIST_FILES))
    full = load_idx(*paths, name="mnist")
    return full.split(n_train, n_valid)


def digits_subset(n_train: int = 1000, n_valid: int = 500, seed: int = 0):
    """scikit-learn's bundled 8x8 digits scaled to [0, 1], shuffled once."""
    from sklearn.datasets import load_digits

    d = load_digits()
    order = np.random.default_rng(seed).permutation(len(d.target))
    ds = Dataset(d.data[order] / 16.0, d.target[order], "digits")
    return ds.split(n_train, n_valid)


@dataclass
class TrendProtocol:
    hidden: int = 50
    epochs: int = 50
    batch_size: int = 20
    learning_rate: float = 0.005
    finetune_epochs: int = 30
    finetune_lr: float = 0.05
    levels: tuple = LEVELS
    seed: int = 0


@dataclass
class TrendRun:
    ae: TiedAutoEncoder
    cae: TiedAutoEncoder
    lam: float
    validation_errors: dict
    metrics: dict = field(default_factory=dict)


def _config(p: TrendProtocol, variant: str, level: float) -> TrainConfig:
    return TrainConfig(p.epochs, p.batch_size, p.learning_rate, p.seed,
                       ObjectiveSpec(variant, level, LossKind.CROSS_ENTROPY))


def validation_error(layer, train: Dataset, valid: Dataset, p: TrendProtocol) -> float:
    mlp = Mlp.from_stack(Stack([layer]), train.dim, max(train.num_classes, 2), make_rng(p.seed + 1))
    cfg = TrainConfig(p.finetune_epochs, p.batch_size, p.finetune_lr, p.seed + 2)
    return evaluate(finetune(mlp, train, cfg), valid)


def trend_run(train: Dataset, valid: Dataset, p: TrendProtocol = TrendProtocol()) -> TrendRun:
    """Train AE and a validation-selected CAE, then measure both on `valid`."""
    ae = pretrain_layer(train, p.hidden, _config(p, "ae", 0.0))
    lam, cae, errors = select_by_validation(
        p.levels, lambda lv: pretrain_layer(train, p.hidden, _config(p, "cae", lv)),
        lambda layer: validation_error(layer, train, valid, p))
    run = TrendRun(ae, cae, lam, errors)
    for name, model in (("ae", ae), ("cae", cae)):
        spectrum = jacobian_spectrum(model, valid).mean_singular_values
        run.metrics[name] = {
            "avg_jacobian_norm": average_jacobian_norm(model, valid),
            "saturation": saturation_fraction(model, valid),
            "reconstruction": clean_cost(model, valid, LossKind.CROSS_ENTROPY),
            "sv15_over_sv1": float(spectrum[14] / spectrum[0]),
        }
    return run


def depth_comparison(train: Dataset, valid: Dataset, lam: float, p: TrendProtocol = TrendProtocol(),
                     points: int = 100, directions: int = 10):
    """Contraction ratio of 1- and 2-layer CAE stacks at the median-distance radius."""
    cfg = _config(p, "cae", lam)
    two = stack_pretrain(train, [p.hidden, p.hidden], cfg)
    one = Stack(two.layers[:1])
    radius = median_pairwise_distance(train, seed=p.seed)
    cc = ContractionConfig([radius], points, directions, p.seed)
    return (radius, float(contraction_curve(one, valid, cc).mean_ratio[0]),
            float(contraction_curve(two, valid, cc).mean_ratio[0]))


def rect_end_to_end(seed: int = 0, side: int = 16, lam: float = 0.1, hidden: int = 100,
                    pretrain_epochs: int = 30, finetune_epochs: int = 200):
    """1-layer CAE pretraining + fine-tuning on generated rectangles.

    Returns (test_error, best_validation_error).
    """
    data = gen_rect(4500, side, seed)
    train, valid, test = data.split(2000, 500, 2000)
    cfg = TrainConfig(pretrain_epochs, 20, 0.005, seed, ObjectiveSpec("cae", lam))
    layer = pretrain_layer(train, hidden, cfg)
    mlp = Mlp.from_stack(Stack([layer]), train.dim, 2, make_rng(seed + 1))
    log: list = []
    mlp = finetune(mlp, train, TrainConfig(finetune_epochs, 20, 0.05, seed + 2), log, valid)
    return evaluate(mlp, test), min(row[2] for row in log)
