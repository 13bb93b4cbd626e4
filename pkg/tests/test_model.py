import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cae.model import (Activation, CorruptionSpec, LossKind, ObjectiveSpec, TiedAutoEncoder,
                       Variant, corrupt, decode, encode, encoder_jacobian, jacobian_frobenius_sq,
                       load_model, objective_gradient, objective_value, reconstruction_loss,
                       save_json, value_and_gradient)
from cae.numerics import DimensionError, finite_diff_gradient, make_rng
from cae.verify import GRAD_LEVELS, gradient_rel_error, random_net

SIG, ID = Activation.SIGMOID, Activation.IDENTITY


def zero_net(d_x, d_h, enc=SIG, dec=SIG):
    return TiedAutoEncoder(np.zeros((d_h, d_x)), np.zeros(d_h), np.zeros(d_x), enc, dec)


def test_encode_examples():
    np.testing.assert_array_equal(encode(zero_net(3, 2), np.ones(3)), [0.5, 0.5])
    x = np.array([0.3, -1.2, 2.0])
    ident = TiedAutoEncoder(np.eye(3), np.zeros(3), np.zeros(3), ID, ID)
    np.testing.assert_array_equal(encode(ident, x), x)
    one = TiedAutoEncoder([[2.0]], [0.0], [0.0])
    assert encode(one, [1.0])[0] == pytest.approx(0.8807970779778823, abs=1e-12)


def test_decode_examples():
    np.testing.assert_array_equal(decode(zero_net(3, 2), np.ones(2)), [0.5, 0.5, 0.5])
    ident = TiedAutoEncoder(np.eye(2), np.zeros(2), np.zeros(2), ID, ID)
    np.testing.assert_array_equal(decode(ident, [0.4, 0.7]), [0.4, 0.7])
    one = TiedAutoEncoder([[2.0]], [0.0], [1.0], ID, ID)
    assert decode(one, [0.5])[0] == 2.0


def test_decoder_uses_transpose(net, rng):
    h = rng.uniform(size=net.d_h)
    np.testing.assert_array_equal(decode(net, h), SIG(h @ net.W + net.b_y))
    np.testing.assert_array_equal(decode(net, h), SIG(net.W.T @ h + net.b_y))


def test_dimension_errors(net):
    with pytest.raises(DimensionError):
        encode(net, np.ones(net.d_x + 1))
    with pytest.raises(DimensionError):
        decode(net, np.ones(net.d_h + 1))
    with pytest.raises(DimensionError):
        reconstruction_loss(np.ones(2), np.ones(3))
    with pytest.raises(DimensionError):
        objective_value(net, np.ones((2, net.d_x + 1)), ObjectiveSpec())


def test_reconstruction_loss_examples():
    assert reconstruction_loss([0.2, 0.9], [0.2, 0.9]) == 0.0
    assert reconstruction_loss([0.0, 0.0], [1.0, 1.0]) == 2.0
    ce = reconstruction_loss([0.5], [0.5], LossKind.CROSS_ENTROPY)
    assert ce == pytest.approx(np.log(2), abs=1e-12)


def test_cross_entropy_clamped():
    val = reconstruction_loss([1.0, 0.0], [0.0, 1.0], LossKind.CROSS_ENTROPY)
    assert np.isfinite(val) and val > 0


def test_cross_entropy_needs_sigmoid_decoder(net):
    lin = TiedAutoEncoder(net.W, net.b_h, net.b_y, SIG, ID)
    with pytest.raises(ValueError):
        objective_value(lin, np.full((1, net.d_x), 0.5), ObjectiveSpec(Variant.AE, 0, LossKind.CROSS_ENTROPY))


def test_corrupt_trivial_cases(rng):
    x = rng.uniform(size=(3, 10))
    np.testing.assert_array_equal(corrupt(x, CorruptionSpec("gaussian", 0.0), rng), x)
    np.testing.assert_array_equal(corrupt(x, CorruptionSpec("masking", 0.0), rng), x)
    np.testing.assert_array_equal(corrupt(x, CorruptionSpec("masking", 1.0), rng), 0 * x)
    np.testing.assert_array_equal(corrupt(x, CorruptionSpec(), rng), x)


def test_gaussian_corruption_statistics():
    x = np.array([0.1, 0.5, 0.9])
    draws = corrupt(np.tile(x, (10 ** 5, 1)), CorruptionSpec("gaussian", 0.1), make_rng(8))
    assert np.all(np.abs(draws.mean(axis=0) - x) < 3 * 0.1 / np.sqrt(10 ** 5))
    assert np.all(np.abs(draws.var(axis=0) / 0.01 - 1) < 0.05)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.floats(0, 1), st.integers(0, 2 ** 32 - 1))
def test_masking_zeroes_exact_count(d, nu, seed):
    x = np.ones((2, d))
    out = corrupt(x, CorruptionSpec("masking", nu), make_rng(seed))
    assert np.all((out == 0).sum(axis=1) == int(round(nu * d)))


def test_corruption_spec_validation():
    with pytest.raises(ValueError):
        CorruptionSpec("gaussian", -0.1)
    with pytest.raises(ValueError):
        ObjectiveSpec(Variant.DAE_B, 1.5)
    with pytest.raises(ValueError):
        ObjectiveSpec(Variant.CAE, -1.0)


def test_jacobian_examples():
    np.testing.assert_array_equal(encoder_jacobian(zero_net(3, 2), np.ones(3)), np.zeros((2, 3)))
    W = make_rng(1).normal(size=(2, 3))
    lin = TiedAutoEncoder(W, np.ones(2), np.zeros(3), ID, SIG)
    np.testing.assert_array_equal(encoder_jacobian(lin, np.ones(3)), W)
    one = TiedAutoEncoder([[2.0]], [0.0], [0.0])
    assert encoder_jacobian(one, [0.0])[0, 0] == 0.5
    assert jacobian_frobenius_sq(one, [0.0]) == 0.25


def test_jacobian_matches_finite_differences(rng):
    ae = random_net(rng, 6, 4)
    x = rng.uniform(size=6)
    jac = encoder_jacobian(ae, x)
    fd = np.stack([finite_diff_gradient(lambda z, j=j: ae.encode(z)[j], x) for j in range(4)])
    assert np.max(np.abs(jac - fd)) < 1e-7


def test_frobenius_identity_encoder_is_weight_decay(rng):
    W = rng.normal(size=(4, 6))
    lin = TiedAutoEncoder(W, rng.normal(size=4), np.zeros(6), ID, SIG)
    values = [jacobian_frobenius_sq(lin, rng.normal(size=6)) for _ in range(10)]
    assert len(set(values)) == 1
    assert values[0] == pytest.approx(np.sum(W ** 2), rel=1e-15)
    assert jacobian_frobenius_sq(zero_net(3, 2), np.ones(3)) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_closed_form_matches_materialized(d_x, d_h, seed):
    rng = make_rng(seed)
    ae = random_net(rng, d_x, d_h, scale=2.0)
    x = rng.uniform(-1, 2, size=d_x)
    closed = jacobian_frobenius_sq(ae, x)
    full = np.sum(encoder_jacobian(ae, x) ** 2)
    assert abs(closed - full) <= 1e-10 * full + 1e-300


def test_saturation_contracts(rng):
    ae = random_net(rng, 6, 4)
    x = rng.uniform(size=6)
    shifted = TiedAutoEncoder(ae.W, ae.b_h + 10, ae.b_y)
    assert jacobian_frobenius_sq(shifted, x) < jacobian_frobenius_sq(ae, x)


def test_objective_identities(rng):
    ae = random_net(rng, 10, 7)
    x = rng.uniform(size=(4, 10))
    ae_val = objective_value(ae, x, ObjectiveSpec(Variant.AE))
    assert objective_value(ae, x, ObjectiveSpec(Variant.CAE, 0.0)) == ae_val
    assert objective_value(ae, x, ObjectiveSpec(Variant.DAE_G, 0.0), rng) == ae_val


def test_weight_decay_penalty():
    ident = TiedAutoEncoder(np.eye(2), np.zeros(2), np.zeros(2), ID, ID)
    x = np.array([[0.3, 0.8]])
    spec = ObjectiveSpec(Variant.AE_WD, 1.0, LossKind.SQUARED_ERROR)
    assert objective_value(ident, x, spec) == 2.0


def test_cae_objective_monotone_in_lambda(rng):
    ae = random_net(rng, 10, 7)
    x = rng.uniform(size=(4, 10))
    vals = [objective_value(ae, x, ObjectiveSpec(Variant.CAE, lam)) for lam in np.linspace(0, 3, 13)]
    assert np.all(np.diff(vals) >= 0)


GRAD_CASES = [(v, loss, acts) for v in Variant for loss in LossKind
              for acts in [(SIG, SIG), (SIG, ID), (ID, SIG), (ID, ID)]
              if not (loss is LossKind.CROSS_ENTROPY and acts[1] is ID)]


@pytest.mark.parametrize("case", range(len(GRAD_CASES)))
def test_gradient_matches_finite_differences(case):
    variant, loss, acts = GRAD_CASES[case]
    rng = make_rng(case)
    ae = random_net(rng, 10, 7, *acts)
    x = rng.uniform(size=(4, 10))
    assert gradient_rel_error(ae, x, ObjectiveSpec(variant, GRAD_LEVELS[variant], loss)) < 1e-6


def test_ae_bias_gradient_at_zero():
    x = make_rng(2).uniform(size=(3, 4))
    grad = objective_gradient(zero_net(4, 2, ID, ID), x, ObjectiveSpec(Variant.AE, 0, LossKind.SQUARED_ERROR))
    np.testing.assert_allclose(grad.db_y, -2 * x.sum(axis=0), atol=1e-15)


def test_cae_zero_lambda_gradient_equals_ae(rng):
    ae = random_net(rng, 10, 7)
    x = rng.uniform(size=(4, 10))
    g_ae = objective_gradient(ae, x, ObjectiveSpec(Variant.AE)).flat()
    g_cae = objective_gradient(ae, x, ObjectiveSpec(Variant.CAE, 0.0)).flat()
    np.testing.assert_array_equal(g_ae, g_cae)


def test_dae_value_and_gradient_share_noise(rng):
    ae = random_net(rng, 10, 7)
    x = rng.uniform(size=(4, 10))
    spec = ObjectiveSpec(Variant.DAE_B, 0.3)
    value, grad = value_and_gradient(ae, x, spec, make_rng(5))
    assert value == objective_value(ae, x, spec, make_rng(5))
    np.testing.assert_array_equal(grad.flat(), objective_gradient(ae, x, spec, make_rng(5)).flat())


def test_serialization_round_trip(tmp_path, rng):
    ae = random_net(rng, 5, 3, SIG, ID)
    path = tmp_path / "m.json"
    save_json(ae, path)
    doc = json.loads(path.read_text())
    assert doc["format_version"] == 1 and doc["d_x"] == 5 and doc["d_h"] == 3
    back = load_model(path)
    np.testing.assert_array_equal(back.W, ae.W)
    np.testing.assert_array_equal(back.b_h, ae.b_h)
    np.testing.assert_array_equal(back.b_y, ae.b_y)
    assert back.dec_act is ID


def test_unknown_format_version(tmp_path, rng):
    doc = random_net(rng, 2, 2).to_dict()
    doc["format_version"] = 7
    with pytest.raises(ValueError):
        TiedAutoEncoder.from_dict(doc)
