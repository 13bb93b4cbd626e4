"""Tied-weight auto-encoder, its five training objectives and their gradients.

All batch functions take examples as rows of a 2-D array. Per-example losses
are summed over a batch, never averaged.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import DimensionError

FORMAT_VERSION = 1
CE_CLAMP = 1e-12


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    IDENTITY = "identity"

    def __call__(self, z):
        if self is Activation.SIGMOID:
            return sigmoid(z)
        return np.asarray(z, dtype=np.float64)

    def derivative_from_output(self, out):
        if self is Activation.SIGMOID:
            return out * (1.0 - out)
        return np.ones_like(out)


class LossKind(str, enum.Enum):
    SQUARED_ERROR = "squared_error"
    CROSS_ENTROPY = "cross_entropy"


class Variant(str, enum.Enum):
    AE = "ae"
    AE_WD = "ae-wd"
    CAE = "cae"
    DAE_G = "dae-g"
    DAE_B = "dae-b"


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str = "none"  # "none" | "gaussian" | "masking"
    level: float = 0.0  # sigma for gaussian, nu for masking

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "masking"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.kind == "gaussian" and not self.level >= 0:
            raise ValueError("sigma must be >= 0")
        if self.kind == "masking" and not 0 <= self.level <= 1:
            raise ValueError("nu must lie in [0, 1]")


@dataclass(frozen=True)
class ObjectiveSpec:
    variant: Variant = Variant.AE
    level: float = 0.0  # lambda, sigma or nu depending on the variant
    loss: LossKind = LossKind.CROSS_ENTROPY

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "loss", LossKind(self.loss))
        if not self.level >= 0:
            raise ValueError(f"{self.variant.value} hyper-parameter must be >= 0, got {self.level}")
        self.corruption  # validates nu <= 1

    @property
    def corruption(self) -> CorruptionSpec:
        if self.variant is Variant.DAE_G:
            return CorruptionSpec("gaussian", self.level)
        if self.variant is Variant.DAE_B:
            return CorruptionSpec("masking", self.level)
        return CorruptionSpec()

    def to_dict(self) -> dict:
        return {"variant": self.variant.value, "level": self.level, "loss": self.loss.value}

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveSpec":
        return cls(Variant(d["variant"]), float(d["level"]), LossKind(d["loss"]))


@dataclass
class ParamGrad:
    dW: np.ndarray
    db_h: np.ndarray
    db_y: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.dW.ravel(), self.db_h, self.db_y])


@dataclass
class TiedAutoEncoder:
    W: np.ndarray  # d_h x d_x; the decoder uses W.T
    b_h: np.ndarray
    b_y: np.ndarray
    enc_act: Activation = Activation.SIGMOID
    dec_act: Activation = Activation.SIGMOID
    kind: str = field(default="autoencoder", init=False)

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64, ndmin=2)
        self.b_h = np.array(self.b_h, dtype=np.float64).ravel()
        self.b_y = np.array(self.b_y, dtype=np.float64).ravel()
        self.enc_act = Activation(self.enc_act)
        self.dec_act = Activation(self.dec_act)
        if self.b_h.shape != (self.d_h,) or self.b_y.shape != (self.d_x,):
            raise DimensionError(
                f"bias shapes {self.b_h.shape}, {self.b_y.shape} do not fit W {self.W.shape}")

    @property
    def d_h(self) -> int:
        return self.W.shape[0]

    @property
    def d_x(self) -> int:
        return self.W.shape[1]

    d_in = d_x
    d_out = d_h

    @classmethod
    def init(cls, d_x: int, d_h: int, rng: np.random.Generator,
             enc_act=Activation.SIGMOID, dec_act=Activation.SIGMOID) -> "TiedAutoEncoder":
        bound = 1.0 / np.sqrt(d_x)
        W = rng.uniform(-bound, bound, size=(d_h, d_x))
        return cls(W, np.zeros(d_h), np.zeros(d_x), enc_act, dec_act)

    def copy(self) -> "TiedAutoEncoder":
        return TiedAutoEncoder(self.W.copy(), self.b_h.copy(), self.b_y.copy(),
                               self.enc_act, self.dec_act)

    def params_flat(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b_h, self.b_y])

    def with_params(self, flat) -> "TiedAutoEncoder":
        flat = np.asarray(flat, dtype=np.float64)
        n_w = self.W.size
        return TiedAutoEncoder(flat[:n_w].reshape(self.W.shape), flat[n_w:n_w + self.d_h],
                               flat[n_w + self.d_h:], self.enc_act, self.dec_act)

    def apply_update(self, grad: ParamGrad, lr: float) -> None:
        self.W -= lr * grad.dW
        self.b_h -= lr * grad.db_h
        self.b_y -= lr * grad.db_y

    # feature-map protocol shared with Rbm and Stack
    def encode(self, x):
        x = _check_width(x, self.d_x)
        return self.enc_act(x @ self.W.T + self.b_h)

    def decode(self, h):
        h = _check_width(h, self.d_h)
        return self.dec_act(h @ self.W + self.b_y)

    def reconstruct(self, x):
        return self.decode(self.encode(x))

    def jacobian(self, x) -> np.ndarray:
        return encoder_jacobian(self, x)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "d_x": self.d_x,
            "d_h": self.d_h,
            "enc_act": self.enc_act.value,
            "dec_act": self.dec_act.value,
            "W": self.W.ravel().tolist(),
            "b_h": self.b_h.tolist(),
            "b_y": self.b_y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TiedAutoEncoder":
        _check_version(d, "autoencoder")
        W = np.array(d["W"], dtype=np.float64).reshape(d["d_h"], d["d_x"])
        return cls(W, d["b_h"], d["b_y"], Activation(d["enc_act"]), Activation(d["dec_act"]))


def _check_version(d: dict, kind: str) -> None:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {d.get('format_version')!r}")
    if d.get("kind", "autoencoder") != kind:
        raise ValueError(f"expected a {kind} document, got kind={d.get('kind')!r}")


def _check_width(a, width: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != width:
        raise DimensionError(f"expected trailing dimension {width}, got shape {a.shape}")
    return a


def save_json(obj, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(obj.to_dict()))


def load_model(path):
    """Load any model document (autoencoder, rbm, stack or mlp) by its `kind`."""
    from .rbm import Rbm
    from .trainer import Mlp, Stack

    d = json.loads(Path(path).read_text())
    kinds = {"autoencoder": TiedAutoEncoder, "rbm": Rbm, "stack": Stack, "mlp": Mlp}
    kind = d.get("kind", "autoencoder")
    if kind not in kinds:
        raise ValueError(f"unknown model kind {kind!r}")
    return kinds[kind].from_dict(d)


def encode(ae: TiedAutoEncoder, x):
    return ae.encode(x)


def decode(ae: TiedAutoEncoder, h):
    return ae.decode(h)


def reconstruction_loss(x, y, loss: LossKind = LossKind.SQUARED_ERROR):
    """Per-example loss; rows are examples when given 2-D input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    if LossKind(loss) is LossKind.SQUARED_ERROR:
        return np.sum((x - y) ** 2, axis=-1)
    y = np.clip(y, CE_CLAMP, 1.0 - CE_CLAMP)
    return -np.sum(x * np.log(y) + (1.0 - x) * np.log1p(-y), axis=-1)


def corrupt(x, spec: CorruptionSpec, rng: np.random.Generator):
    """Corrupt each row of `x` independently.

    Masking zeroes exactly round(nu * d_x) components per row, chosen without
    replacement. Draws are consumed row by row, so a batch and its rows fed
    one at a time from the same generator state get identical noise.
    """
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == "none" or spec.level == 0:
        return x.copy()
    if spec.kind == "gaussian":
        return x + rng.normal(0.0, spec.level, size=x.shape)
    rows = np.atleast_2d(x).copy()
    d = rows.shape[1]
    n_mask = int(round(spec.level * d))
    for row in rows:
        row[rng.permutation(d)[:n_mask]] = 0.0
    return rows.reshape(x.shape)


def encoder_jacobian(ae: TiedAutoEncoder, x) -> np.ndarray:
    """d_h x d_x matrix of dh_j/dx_i at a single input."""
    x = _check_width(x, ae.d_x).ravel()
    if ae.enc_act is Activation.IDENTITY:
        return ae.W.copy()
    h = ae.encode(x)
    return (h * (1.0 - h))[:, None] * ae.W


def jacobian_frobenius_sq(ae: TiedAutoEncoder, x):
    """Squared Frobenius norm of the encoder Jacobian, per row of `x`.

    Uses sum_j (h_j (1 - h_j))^2 * ||W_j||^2 instead of building J.
    """
    x = _check_width(x, ae.d_x)
    row_sq = np.sum(ae.W ** 2, axis=1)
    if ae.enc_act is Activation.IDENTITY:
        total = float(np.sum(row_sq))
        return total if x.ndim == 1 else np.full(x.shape[0], total)
    h = ae.encode(x)
    return ((h * (1.0 - h)) ** 2) @ row_sq


def _check_loss(ae: TiedAutoEncoder, spec: ObjectiveSpec) -> None:
    if spec.loss is LossKind.CROSS_ENTROPY and ae.dec_act is not Activation.SIGMOID:
        raise ValueError("cross-entropy loss requires a sigmoid decoder")


def _forward(ae, batch, spec, rng, noisy):
    batch = np.atleast_2d(_check_width(batch, ae.d_x))
    if noisy is None:
        noisy = corrupt(batch, spec.corruption, rng)
    h = ae.encode(noisy)
    y = ae.decode(h)
    return batch, noisy, h, y


def objective_value(ae: TiedAutoEncoder, batch, spec: ObjectiveSpec,
                    rng: np.random.Generator | None = None, noisy=None) -> float:
    """Summed objective on `batch`.

    DAE variants draw one corruption per example from `rng`; pass `noisy` to
    evaluate at a fixed corrupted batch instead.
    """
    _check_loss(ae, spec)
    batch, _, h, y = _forward(ae, batch, spec, rng, noisy)
    value = float(np.sum(reconstruction_loss(batch, y, spec.loss)))
    if spec.variant is Variant.AE_WD:
        value += spec.level * float(np.sum(ae.W ** 2))
    elif spec.variant is Variant.CAE:
        value += spec.level * float(np.sum(jacobian_frobenius_sq(ae, batch)))
    return value


def value_and_gradient(ae: TiedAutoEncoder, batch, spec: ObjectiveSpec,
                       rng: np.random.Generator | None = None, noisy=None):
    """Objective value and its exact gradient, sharing one corruption draw."""
    _check_loss(ae, spec)
    batch, noisy, h, y = _forward(ae, batch, spec, rng, noisy)
    value = float(np.sum(reconstruction_loss(batch, y, spec.loss)))

    if spec.loss is LossKind.CROSS_ENTROPY:
        # sigmoid output: the derivative w.r.t. the pre-activation collapses to y - x
        d_out = y - batch
    else:
        d_out = 2.0 * (y - batch) * ae.dec_act.derivative_from_output(y)
    dW = h.T @ d_out
    db_y = d_out.sum(axis=0)
    d_pre = (d_out @ ae.W.T) * ae.enc_act.derivative_from_output(h)

    lam = spec.level
    if spec.variant is Variant.AE_WD:
        value += lam * float(np.sum(ae.W ** 2))
        dW += 2.0 * lam * ae.W
    elif spec.variant is Variant.CAE:
        row_sq = np.sum(ae.W ** 2, axis=1)
        if ae.enc_act is Activation.IDENTITY:
            n = batch.shape[0]
            value += lam * n * float(row_sq.sum())
            dW += 2.0 * lam * n * ae.W
        else:
            s = h * (1.0 - h)
            value += lam * float(np.sum(s ** 2 @ row_sq))
            dW += 2.0 * lam * (s ** 2).sum(axis=0)[:, None] * ae.W
            # d/da of s^2 = 2 s^2 (1 - 2h), since ds/da = s (1 - 2h)
            d_pre = d_pre + 2.0 * lam * row_sq * s ** 2 * (1.0 - 2.0 * h)
    # CAE penalty is evaluated at the clean input, so its pre-activation
    # gradient pairs with `batch`; for CAE noisy == batch anyway
    dW += d_pre.T @ noisy
    db_h = d_pre.sum(axis=0)
    return value, ParamGrad(dW, db_h, db_y)


def objective_gradient(ae: TiedAutoEncoder, batch, spec: ObjectiveSpec,
                       rng: np.random.Generator | None = None, noisy=None) -> ParamGrad:
    return value_and_gradient(ae, batch, spec, rng, noisy)[1]
