"""Binary-binary RBM trained with CD-k."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import FORMAT_VERSION, ParamGrad, _check_version, _check_width, sigmoid


@dataclass
class Rbm:
    W: np.ndarray  # d_h x d_x
    b_v: np.ndarray
    b_h: np.ndarray
    kind: str = field(default="rbm", init=False)

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64, ndmin=2)
        self.b_v = np.array(self.b_v, dtype=np.float64).ravel()
        self.b_h = np.array(self.b_h, dtype=np.float64).ravel()

    @property
    def d_h(self) -> int:
        return self.W.shape[0]

    @property
    def d_x(self) -> int:
        return self.W.shape[1]

    d_in = d_x
    d_out = d_h

    @classmethod
    def init(cls, d_x: int, d_h: int, rng: np.random.Generator) -> "Rbm":
        bound = 1.0 / np.sqrt(d_x)
        return cls(rng.uniform(-bound, bound, size=(d_h, d_x)), np.zeros(d_x), np.zeros(d_h))

    def copy(self) -> "Rbm":
        return Rbm(self.W.copy(), self.b_v.copy(), self.b_h.copy())

    def apply_update(self, grad: ParamGrad, lr: float) -> None:
        # ParamGrad.db_y carries the visible-bias component
        self.W -= lr * grad.dW
        self.b_h -= lr * grad.db_h
        self.b_v -= lr * grad.db_y

    def encode(self, v):
        return hidden_activation(self, v)

    def jacobian(self, v) -> np.ndarray:
        h = hidden_activation(self, np.ravel(v))
        return (h * (1.0 - h))[:, None] * self.W

    def visible_activation(self, h):
        return sigmoid(np.asarray(h) @ self.W + self.b_v)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "d_x": self.d_x,
            "d_h": self.d_h,
            "W": self.W.ravel().tolist(),
            "b_v": self.b_v.tolist(),
            "b_h": self.b_h.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Rbm":
        _check_version(d, "rbm")
        return cls(np.array(d["W"], dtype=np.float64).reshape(d["d_h"], d["d_x"]), d["b_v"], d["b_h"])


def hidden_activation(rbm: Rbm, v):
    v = _check_width(v, rbm.d_x)
    return sigmoid(v @ rbm.W.T + rbm.b_h)


def free_energy(rbm: Rbm, v):
    v = _check_width(v, rbm.d_x)
    return -(v @ rbm.b_v) - np.sum(np.logaddexp(0.0, v @ rbm.W.T + rbm.b_h), axis=-1)


def cd_gradient(rbm: Rbm, v, k: int = 1, rng: np.random.Generator | None = None) -> ParamGrad:
    """CD-k estimate of the negative log-likelihood gradient, summed over rows of `v`.

    The chain samples binary states for both layers; the negative statistics
    use the last visible sample with mean-field hidden probabilities. The
    visible-bias component is returned in `db_y`.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    v0 = np.atleast_2d(_check_width(v, rbm.d_x))
    ph0 = hidden_activation(rbm, v0)
    ph = ph0
    for _ in range(k):
        h = (rng.random(ph.shape) < ph).astype(np.float64)
        vk = (rng.random(v0.shape) < rbm.visible_activation(h)).astype(np.float64)
        ph = hidden_activation(rbm, vk)
    dW = ph.T @ vk - ph0.T @ v0
    db_h = ph.sum(axis=0) - ph0.sum(axis=0)
    db_v = vk.sum(axis=0) - v0.sum(axis=0)
    return ParamGrad(dW, db_h, db_v)
