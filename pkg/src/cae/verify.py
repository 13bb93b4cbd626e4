"""Reusable verification runs: gradient checks, Hessian-trace checks, toy models."""
from __future__ import annotations

import numpy as np

from .data import Dataset
from .dae_link import hessian_trace_mse
from .model import (Activation, LossKind, ObjectiveSpec, TiedAutoEncoder, Variant, corrupt,
                    objective_gradient, objective_value, reconstruction_loss)
from .numerics import finite_diff_gradient, finite_diff_hessian_trace, make_rng

GRAD_LEVELS = {Variant.AE: 0.0, Variant.AE_WD: 0.3, Variant.CAE: 0.5,
               Variant.DAE_G: 0.3, Variant.DAE_B: 0.3}


def random_net(rng, d_x: int, d_h: int, enc=Activation.SIGMOID, dec=Activation.SIGMOID,
               scale: float = 0.5) -> TiedAutoEncoder:
    return TiedAutoEncoder(rng.normal(0.0, scale, (d_h, d_x)), rng.normal(0.0, scale, d_h),
                           rng.normal(0.0, scale, d_x), enc, dec)


def gradient_rel_error(ae: TiedAutoEncoder, batch, spec: ObjectiveSpec, noise_seed: int = 0) -> float:
    """Relative L2 error between analytic and central-difference gradients at frozen noise."""
    noisy = corrupt(batch, spec.corruption, make_rng(noise_seed))
    analytic = objective_gradient(ae, batch, spec, noisy=noisy).flat()
    numeric = finite_diff_gradient(
        lambda p: objective_value(ae.with_params(p), batch, spec, noisy=noisy), ae.params_flat())
    denom = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-300)
    return float(2.0 * np.linalg.norm(analytic - numeric) / denom)


def gradcheck(nets: int = 10, d_x: int = 10, d_h: int = 7, batch: int = 4, seed: int = 0):
    """Rows of (variant, loss, net index, relative error) for every valid combination."""
    rng = make_rng(seed)
    rows = []
    for variant in Variant:
        for loss in LossKind:
            for k in range(nets):
                ae = random_net(rng, d_x, d_h)
                x = rng.uniform(0.0, 1.0, (batch, d_x))
                spec = ObjectiveSpec(variant, GRAD_LEVELS[variant], loss)
                rows.append((variant.value, loss.value, k, gradient_rel_error(ae, x, spec, k)))
    return rows


def identity_network(d: int) -> TiedAutoEncoder:
    """Linear tied network with W = I, so g(f(x)) = x exactly."""
    return TiedAutoEncoder(np.eye(d), np.zeros(d), np.zeros(d), Activation.IDENTITY, Activation.IDENTITY)


def hessian_check(ae: TiedAutoEncoder, x):
    """(decomposition, finite-difference trace) for the squared-error loss at x."""
    parts = hessian_trace_mse(ae, x)
    fd = finite_diff_hessian_trace(
        lambda z: float(reconstruction_loss(z, ae.reconstruct(z), LossKind.SQUARED_ERROR)), x)
    return parts, fd


def toy_taylor_setup(seed: int = 0, n: int = 10, d_x: int = 5, d_h: int = 3):
    """Small sigmoid network and dataset used by the Taylor-link check."""
    rng = make_rng(seed)
    ae = random_net(rng, d_x, d_h, scale=1.0)
    return ae, Dataset(rng.uniform(0.0, 1.0, (n, d_x)), None, "toy")
