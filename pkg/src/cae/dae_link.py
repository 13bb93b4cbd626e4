"""Numerical check that Gaussian-noise DAE cost = clean cost + Hessian-trace penalty.

Costs here are averaged over examples (1/n), unlike the summed training
objectives in `model`.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import Activation, LossKind, TiedAutoEncoder, reconstruction_loss
from .numerics import finite_diff_hessian_trace

MC_CHUNK = 200_000
FD_STEP = 1e-4


def clean_cost(ae: TiedAutoEncoder, data: Dataset, loss: LossKind) -> float:
    x = data.features
    if len(x) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(reconstruction_loss(x, ae.reconstruct(x), loss)))


def noisy_cost_mc(ae: TiedAutoEncoder, data: Dataset, loss: LossKind, sigma: float,
                  samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte-Carlo Gaussian-kernel cost and its standard error.

    Each example gets its own substream spawned from `rng`, in example order.
    """
    if sigma < 0 or samples < 1:
        raise ValueError("need sigma >= 0 and samples >= 1")
    if sigma == 0:
        return clean_cost(ae, data, loss), 0.0
    x = data.features
    n = len(x)
    means, variances = np.empty(n), np.empty(n)
    for i, sub in enumerate(rng.spawn(n)):
        total, total_sq, done = 0.0, 0.0, 0
        while done < samples:
            m = min(MC_CHUNK, samples - done)
            xi = np.broadcast_to(x[i], (m, x.shape[1]))
            noisy = xi + sub.normal(0.0, sigma, size=xi.shape)
            # the loss is L(x) = loss(x, r(x)) evaluated at the noisy point
            vals = reconstruction_loss(noisy, ae.reconstruct(noisy), loss)
            total += vals.sum()
            total_sq += np.sum(vals ** 2)
            done += m
        means[i] = total / samples
        variances[i] = max(total_sq - samples * means[i] ** 2, 0.0) / max(samples - 1, 1)
    stderr = float(np.sqrt(variances.sum() / samples) / n) if samples > 1 else 0.0
    return float(means.mean()), stderr


def reconstruction_jacobian(ae: TiedAutoEncoder, x) -> np.ndarray:
    """d_x x d_x Jacobian of x -> g(f(x))."""
    x = np.ravel(x)
    h = ae.encode(x)
    y = ae.decode(h)
    enc = ae.enc_act.derivative_from_output(h)
    dec = ae.dec_act.derivative_from_output(y)
    return dec[:, None] * (ae.W.T @ (enc[:, None] * ae.W))


@dataclass
class HessianTrace:
    trace_corrected: float
    trace_literal_form: float
    residual_term: float
    jac_term: float


def hessian_trace_mse(ae: TiedAutoEncoder, x,
                      loss: LossKind = LossKind.SQUARED_ERROR) -> HessianTrace:
    """Trace of the input Hessian of ||g(f(x)) - x||^2, split into its two terms.

    Tr H = 2 sum_k (r_k - x_k) Tr H_{r_k} + 2 ||J_r - I||_F^2. The second
    derivatives of r come from central differences of the analytic J_r.
    `trace_literal_form` drops the identity from the Jacobian term.
    """
    if LossKind(loss) is not LossKind.SQUARED_ERROR:
        raise NotImplementedError("closed-form decomposition exists only for squared error")
    x = np.array(x, dtype=np.float64).ravel()
    d = x.size
    jac = reconstruction_jacobian(ae, x)
    r = ae.reconstruct(x)
    hess_diag = np.zeros(d)  # sum_i d^2 r_k / dx_i^2 for every k
    for i in range(d):
        step = np.zeros(d)
        step[i] = FD_STEP
        diff = reconstruction_jacobian(ae, x + step) - reconstruction_jacobian(ae, x - step)
        hess_diag += diff[:, i] / (2.0 * FD_STEP)
    residual = 2.0 * float((r - x) @ hess_diag)
    jac_term = 2.0 * float(np.sum((jac - np.eye(d)) ** 2))
    literal = residual + 2.0 * float(np.sum(jac ** 2))
    return HessianTrace(residual + jac_term, literal, residual, jac_term)


def loss_hessian_trace(ae: TiedAutoEncoder, x, loss: LossKind) -> float:
    """Tr H_L at x: analytic decomposition for squared error, finite differences otherwise."""
    if LossKind(loss) is LossKind.SQUARED_ERROR:
        return hessian_trace_mse(ae, x).trace_corrected
    return finite_diff_hessian_trace(
        lambda z: float(reconstruction_loss(z, ae.reconstruct(z), loss)), x)


@dataclass
class TaylorReport:
    sigma: float
    clean_cost: float
    noisy_cost_mc: float
    stderr: float
    mc_samples: int
    traces: np.ndarray
    prediction: float
    ratio: float | None
    trace_corrected_sum: float
    trace_literal_form_sum: float
    reconstruction_jacobian_fro_sq: float
    flagged: bool = False

    @property
    def gap(self) -> float:
        return self.noisy_cost_mc - self.clean_cost

    def within_tolerance(self, rel: float = 0.05, n_stderr: float = 3.0) -> bool:
        return abs(self.gap - self.prediction) <= max(n_stderr * self.stderr, rel * abs(self.prediction))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sigma", "clean", "noisy", "stderr", "prediction", "ratio",
                        "trace_corrected_sum", "trace_literal_form_sum"])
            w.writerow([repr(v) if v is not None else "" for v in (
                self.sigma, self.clean_cost, self.noisy_cost_mc, self.stderr, self.prediction,
                self.ratio, self.trace_corrected_sum, self.trace_literal_form_sum)])


def taylor_gap(ae: TiedAutoEncoder, data: Dataset, loss: LossKind, sigma: float, samples: int,
               rng: np.random.Generator) -> TaylorReport:
    """Compare the measured noisy-minus-clean gap with sigma^2/(2n) * sum Tr H_L(x_i)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    loss = LossKind(loss)
    x = data.features
    n = len(x)
    clean = clean_cost(ae, data, loss)
    noisy, stderr = noisy_cost_mc(ae, data, loss, sigma, samples, rng)
    if loss is LossKind.SQUARED_ERROR:
        parts = [hessian_trace_mse(ae, xi) for xi in x]
        traces = np.array([p.trace_corrected for p in parts])
        literal_sum = float(sum(p.trace_literal_form for p in parts))
    else:
        traces = np.array([loss_hessian_trace(ae, xi, loss) for xi in x])
        literal_sum = float("nan")
    jac_sq = float(np.mean([np.sum(reconstruction_jacobian(ae, xi) ** 2) for xi in x]))
    prediction = sigma ** 2 / (2.0 * n) * float(traces.sum())
    flagged = abs(prediction) < 1e-300
    ratio = None if flagged else (noisy - clean) / prediction
    return TaylorReport(sigma, clean, noisy, stderr, samples, traces, prediction, ratio,
                        float(traces.sum()), literal_sum, jac_sq, flagged)


def linear_closed_form_gap(ae: TiedAutoEncoder, sigma: float) -> float:
    """Exact E[L(x + e)] - L(x) for an identity/identity network under squared error."""
    if ae.enc_act is not Activation.IDENTITY or ae.dec_act is not Activation.IDENTITY:
        raise ValueError("closed form needs identity activations")
    a = ae.W.T @ ae.W
    return sigma ** 2 * float(np.sum((a - np.eye(ae.d_x)) ** 2))
