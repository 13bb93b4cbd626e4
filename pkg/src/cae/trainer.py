"""Minibatch SGD pretraining, greedy stacking and supervised MLP fine-tuning."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, encode_dataset
from .model import (FORMAT_VERSION, ObjectiveSpec, TiedAutoEncoder, _check_version,
                    sigmoid, value_and_gradient)
from .numerics import make_rng
from .rbm import Rbm, cd_gradient, free_energy


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Plain SGD on summed minibatch losses; learning rates are per summed batch."""
    epochs: int = 50
    batch_size: int = 20
    learning_rate: float = 0.005
    seed: int = 0
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    shuffle: bool = True
    cd_k: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError(f"invalid training config {self}")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "learning_rate": self.learning_rate, "seed": self.seed,
                "objective": self.objective.to_dict(), "shuffle": self.shuffle, "cd_k": self.cd_k}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["objective"] = ObjectiveSpec.from_dict(d["objective"])
        return cls(**d)


def _batches(n: int, cfg: TrainConfig, rng: np.random.Generator):
    order = rng.permutation(n) if cfg.shuffle else np.arange(n)
    for start in range(0, n, cfg.batch_size):
        yield order[start:start + cfg.batch_size]


def _check_finite(params, epoch: int, batch: int) -> None:
    if not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingError(f"non-finite parameters at epoch {epoch}, batch {batch}")


def pretrain_layer(data: Dataset, d_h: int, cfg: TrainConfig, log: list | None = None,
                   init: TiedAutoEncoder | None = None) -> TiedAutoEncoder:
    """Train a sigmoid/sigmoid tied auto-encoder; appends (epoch, objective) rows to `log`."""
    if d_h < 1:
        raise ValueError("d_h must be >= 1")
    rng = make_rng(cfg.seed)
    ae = init.copy() if init is not None else TiedAutoEncoder.init(data.dim, d_h, rng)
    x = data.features
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for b, idx in enumerate(_batches(len(x), cfg, rng)):
            value, grad = value_and_gradient(ae, x[idx], cfg.objective, rng)
            ae.apply_update(grad, cfg.learning_rate)
            _check_finite((ae.W, ae.b_h, ae.b_y), epoch, b)
            total += value
        if log is not None:
            log.append((epoch, total))
    return ae


def pretrain_rbm(data: Dataset, d_h: int, cfg: TrainConfig, log: list | None = None) -> Rbm:
    """CD-k training; the logged quantity is the mean free energy of the training set."""
    rng = make_rng(cfg.seed)
    rbm = Rbm.init(data.dim, d_h, rng)
    x = data.features
    for epoch in range(1, cfg.epochs + 1):
        for b, idx in enumerate(_batches(len(x), cfg, rng)):
            rbm.apply_update(cd_gradient(rbm, x[idx], cfg.cd_k, rng), cfg.learning_rate)
            _check_finite((rbm.W, rbm.b_v, rbm.b_h), epoch, b)
        if log is not None:
            log.append((epoch, float(np.mean(free_energy(rbm, x)))))
    return rbm


@dataclass
class Stack:
    layers: list

    kind = "stack"

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.d_out != b.d_in:
                raise ValueError(f"layer output {a.d_out} does not feed input {b.d_in}")

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out

    def encode(self, x):
        for layer in self.layers:
            x = layer.encode(x)
        return x

    def jacobian(self, x) -> np.ndarray:
        jac = np.eye(self.d_in)
        h = np.ravel(x)
        for layer in self.layers:
            jac = layer.jacobian(h) @ jac
            h = layer.encode(h)
        return jac

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": self.kind,
                "layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "Stack":
        _check_version(d, "stack")
        kinds = {"autoencoder": TiedAutoEncoder, "rbm": Rbm}
        return cls([kinds[ld.get("kind", "autoencoder")].from_dict(ld) for ld in d["layers"]])


def stack_pretrain(data: Dataset, dims: list[int], cfgs, logs: list | None = None,
                   kind: str = "ae") -> Stack:
    """Greedy layer-wise training; `cfgs` is one TrainConfig or one per layer."""
    if not dims:
        raise ValueError("dims must be nonempty")
    if isinstance(cfgs, TrainConfig):
        cfgs = [cfgs] * len(dims)
    train = pretrain_layer if kind == "ae" else pretrain_rbm
    layers, current = [], data
    for k, (d_h, cfg) in enumerate(zip(dims, cfgs)):
        log = [] if logs is not None else None
        layer = train(current, d_h, cfg, log)
        if logs is not None:
            logs.append(log)
        layers.append(layer)
        if k + 1 < len(dims):
            current = encode_dataset(layer, current)
    return Stack(layers)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class Mlp:
    hidden: list  # [(W, b)], sigmoid units
    out_W: np.ndarray
    out_b: np.ndarray
    output: str = "softmax"  # or "sigmoid" for a single binary unit

    kind = "mlp"

    @classmethod
    def from_stack(cls, stack: Stack | None, d_in: int, n_classes: int,
                   rng: np.random.Generator) -> "Mlp":
        hidden = [] if stack is None else [(l.W.copy(), l.b_h.copy()) for l in stack.layers]
        fan_in = hidden[-1][0].shape[0] if hidden else d_in
        n_out = 1 if n_classes == 2 else n_classes
        bound = 1.0 / np.sqrt(fan_in)
        return cls(hidden, rng.uniform(-bound, bound, size=(n_out, fan_in)), np.zeros(n_out),
                   "sigmoid" if n_classes == 2 else "softmax")

    def copy(self) -> "Mlp":
        return Mlp([(W.copy(), b.copy()) for W, b in self.hidden], self.out_W.copy(),
                   self.out_b.copy(), self.output)

    def _forward(self, x):
        acts = [np.atleast_2d(np.asarray(x, dtype=np.float64))]
        for W, b in self.hidden:
            acts.append(sigmoid(acts[-1] @ W.T + b))
        return acts, acts[-1] @ self.out_W.T + self.out_b

    def predict_proba(self, x) -> np.ndarray:
        _, z = self._forward(x)
        if self.output == "sigmoid":
            p = sigmoid(z[:, 0])
            return np.column_stack([1.0 - p, p])
        return np.exp(_log_softmax(z))

    def predict(self, x) -> np.ndarray:
        _, z = self._forward(x)
        if self.output == "sigmoid":
            return (z[:, 0] > 0).astype(np.int64)
        return np.argmax(z, axis=1)

    def nll_and_grads(self, x, y):
        """Summed negative log-likelihood and gradients for every layer."""
        acts, z = self._forward(x)
        if self.output == "sigmoid":
            t = y.astype(np.float64)[:, None]
            nll = float(np.sum(np.logaddexp(0.0, z) - t * z))
            delta = sigmoid(z) - t
        else:
            logp = _log_softmax(z)
            nll = -float(np.sum(logp[np.arange(len(y)), y]))
            delta = np.exp(logp)
            delta[np.arange(len(y)), y] -= 1.0
        grads = [(delta.T @ acts[-1], delta.sum(axis=0))]
        back = delta @ self.out_W
        for i in range(len(self.hidden) - 1, -1, -1):
            h = acts[i + 1]
            d_pre = back * h * (1.0 - h)
            grads.append((d_pre.T @ acts[i], d_pre.sum(axis=0)))
            back = d_pre @ self.hidden[i][0]
        grads.reverse()
        return nll, grads

    def params(self) -> list:
        return [p for pair in self.hidden for p in pair] + [self.out_W, self.out_b]

    def to_dict(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": self.kind, "output": self.output,
                "layers": [{"d_in": W.shape[1], "d_out": W.shape[0], "W": W.ravel().tolist(),
                            "b": b.tolist()} for W, b in self.hidden],
                "out": {"d_in": self.out_W.shape[1], "d_out": self.out_W.shape[0],
                        "W": self.out_W.ravel().tolist(), "b": self.out_b.tolist()}}

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        _check_version(d, "mlp")

        def layer(ld):
            return (np.array(ld["W"], dtype=np.float64).reshape(ld["d_out"], ld["d_in"]),
                    np.array(ld["b"], dtype=np.float64))
        out_W, out_b = layer(d["out"])
        return cls([layer(ld) for ld in d["layers"]], out_W, out_b, d["output"])


def finetune(mlp: Mlp, data: Dataset, cfg: TrainConfig, log: list | None = None,
             validation: Dataset | None = None) -> Mlp:
    """Backpropagate through every layer; logs (epoch, nll[, validation_error])."""
    if data.labels is None:
        raise ValueError("fine-tuning needs labels")
    if data.num_classes < 2 and mlp.output == "softmax":
        raise ValueError("need at least two classes")
    rng = make_rng(cfg.seed)
    mlp = mlp.copy()
    x, y = data.features, data.labels
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for b, idx in enumerate(_batches(len(x), cfg, rng)):
            nll, grads = mlp.nll_and_grads(x[idx], y[idx])
            for param, grad in zip(mlp.params(), (g for pair in grads for g in pair)):
                param -= cfg.learning_rate * grad
            _check_finite(mlp.params(), epoch, b)
            total += nll
        if log is not None:
            row = (epoch, total)
            if validation is not None:
                row += (evaluate(mlp, validation),)
            log.append(row)
    return mlp


def evaluate(mlp: Mlp, data: Dataset) -> float:
    """Classification error rate; ties go to the lowest class index."""
    if data.labels is None:
        raise ValueError("evaluation needs labels")
    return float(np.mean(mlp.predict(data.features) != data.labels))


def select_by_validation(levels, train, score):
    """Train one model per level and keep the lowest score (first wins ties).

    Returns (best_level, best_model, {level: score}).
    """
    scores, best = {}, None
    for level in levels:
        model = train(level)
        scores[level] = score(model)
        if best is None or scores[level] < scores[best[0]]:
            best = (level, model)
    return best[0], best[1], scores


def with_level(cfg: TrainConfig, level: float) -> TrainConfig:
    return replace(cfg, objective=replace(cfg.objective, level=level))


def write_log(path, rows, validation: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "objective"] + (["validation_error"] if validation else []))
        for row in rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
