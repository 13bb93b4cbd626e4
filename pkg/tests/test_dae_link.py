import numpy as np
import pytest

from cae.dae_link import (clean_cost, hessian_trace_mse, linear_closed_form_gap, loss_hessian_trace,
                          noisy_cost_mc, reconstruction_jacobian, taylor_gap)
from cae.data import Dataset
from cae.model import (Activation, LossKind, ObjectiveSpec, TiedAutoEncoder, Variant, objective_value,
                       reconstruction_loss)
from cae.numerics import finite_diff_gradient, make_rng
from cae.verify import hessian_check, identity_network, random_net, toy_taylor_setup

SQ, CE = LossKind.SQUARED_ERROR, LossKind.CROSS_ENTROPY
ID = Activation.IDENTITY


def linear_net(rng, d_x=4, d_h=2, scale=0.5):
    return TiedAutoEncoder(rng.normal(0, scale, (d_h, d_x)), np.zeros(d_h), np.zeros(d_x), ID, ID)


def test_clean_cost_examples(rng):
    data = Dataset(rng.uniform(size=(5, 3)))
    assert clean_cost(identity_network(3), data, SQ) == 0.0
    zero = TiedAutoEncoder(np.zeros((2, 3)), np.zeros(2), np.zeros(3))
    expected = np.mean(np.sum((data.features - 0.5) ** 2, axis=1))
    assert clean_cost(zero, data, SQ) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        clean_cost(zero, Dataset(np.zeros((0, 3))), SQ)


def test_zero_sigma_returns_clean_cost():
    ae, data = toy_taylor_setup()
    assert noisy_cost_mc(ae, data, SQ, 0.0, 10, make_rng(0)) == (clean_cost(ae, data, SQ), 0.0)


def test_linear_network_matches_closed_form():
    rng = make_rng(6)
    ae = linear_net(rng)
    data = Dataset(rng.uniform(size=(3, 4)))
    sigma = 0.2
    noisy, stderr = noisy_cost_mc(ae, data, SQ, sigma, 200_000, make_rng(1))
    gap = noisy - clean_cost(ae, data, SQ)
    assert abs(gap - linear_closed_form_gap(ae, sigma)) <= 3 * stderr


def test_closed_form_needs_identity(rng):
    with pytest.raises(ValueError):
        linear_closed_form_gap(random_net(rng, 3, 2), 0.1)


def test_stderr_shrinks_with_samples():
    ae, data = toy_taylor_setup()
    _, s1 = noisy_cost_mc(ae, data, SQ, 0.1, 20_000, make_rng(0))
    _, s2 = noisy_cost_mc(ae, data, SQ, 0.1, 40_000, make_rng(0))
    assert s1 / s2 == pytest.approx(np.sqrt(2), rel=0.05)


def test_reconstruction_jacobian_matches_fd(rng):
    ae = random_net(rng, 5, 3, scale=1.0)
    x = rng.uniform(size=5)
    fd = np.stack([finite_diff_gradient(lambda z, k=k: ae.reconstruct(z)[k], x) for k in range(5)])
    np.testing.assert_allclose(reconstruction_jacobian(ae, x), fd, atol=1e-8)


def test_identity_network_traces():
    parts = hessian_trace_mse(identity_network(4), np.array([0.1, 0.5, 0.2, 0.9]))
    assert parts.trace_corrected == 0.0
    assert parts.trace_literal_form == 8.0  # 2 * d_x
    assert parts.residual_term == 0.0


def test_zero_network_trace():
    # r(x) is constant, so L = ||c - x||^2 has Hessian 2I
    zero = TiedAutoEncoder(np.zeros((2, 3)), np.zeros(2), np.zeros(3))
    parts = hessian_trace_mse(zero, np.array([0.3, 0.6, 0.1]))
    assert parts.trace_corrected == pytest.approx(6.0, abs=1e-12)
    assert parts.trace_literal_form == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_decomposition_matches_fd_trace(seed):
    rng = make_rng(100 + seed)
    ae = random_net(rng, 5, 3, scale=1.0)
    x = rng.uniform(size=5)
    parts, fd = hessian_check(ae, x)
    assert abs(parts.trace_corrected - fd) <= 1e-4 * abs(fd)
    assert parts.residual_term + parts.jac_term == parts.trace_corrected
    assert abs(parts.trace_literal_form - fd) > 1e-3 * abs(fd)


def test_cross_entropy_decomposition_not_implemented(rng):
    with pytest.raises(NotImplementedError):
        hessian_trace_mse(random_net(rng, 3, 2), np.full(3, 0.5), CE)
    # the general path still works by finite differences
    assert np.isfinite(loss_hessian_trace(random_net(rng, 3, 2), np.full(3, 0.5), CE))


def test_taylor_gap_small_sigma():
    ae, data = toy_taylor_setup()
    report = taylor_gap(ae, data, SQ, 0.03, 200_000, make_rng(2))
    assert report.within_tolerance()
    assert report.trace_corrected_sum != report.trace_literal_form_sum
    assert report.ratio == pytest.approx(1.0, abs=0.1)


def test_gap_scales_with_sigma_squared():
    ae, data = toy_taylor_setup()
    g1 = taylor_gap(ae, data, SQ, 0.2, 100_000, make_rng(3)).gap
    g2 = taylor_gap(ae, data, SQ, 0.1, 100_000, make_rng(3)).gap
    assert 3.5 <= g1 / g2 <= 4.5


def test_taylor_rejects_zero_sigma():
    ae, data = toy_taylor_setup()
    with pytest.raises(ValueError):
        taylor_gap(ae, data, SQ, 0.0, 10, make_rng(0))


def test_taylor_csv(tmp_path):
    ae, data = toy_taylor_setup(n=2)
    report = taylor_gap(ae, data, SQ, 0.1, 1000, make_rng(0))
    report.write_csv(tmp_path / "t.csv")
    header, row = (tmp_path / "t.csv").read_text().splitlines()
    assert header.startswith("sigma,clean,noisy,stderr,prediction")
    assert float(row.split(",")[0]) == 0.1


def test_clean_cost_definitions(rng):
    ae = random_net(rng, 4, 3)
    x = rng.uniform(size=(6, 4))
    one = Dataset(x[:1])
    assert clean_cost(ae, one, CE) == reconstruction_loss(x[0], ae.reconstruct(x[0]), CE)
    total = objective_value(ae, x, ObjectiveSpec(Variant.AE, 0.0, CE))
    assert abs(clean_cost(ae, Dataset(x), CE) - total / 6) <= 1e-12 * total


def test_identity_zero_network_trace():
    zero = TiedAutoEncoder(np.zeros((2, 3)), np.zeros(2), np.zeros(3), ID, ID)
    parts = hessian_trace_mse(zero, np.array([0.3, 0.6, 0.1]))
    assert parts.residual_term == 0.0 and parts.trace_corrected == 6.0


def test_linear_model_taylor_ratio_is_one():
    rng = make_rng(9)
    ae = linear_net(rng)
    data = Dataset(rng.uniform(size=(3, 4)))
    report = taylor_gap(ae, data, SQ, 0.1, 200_000, make_rng(10))
    assert abs(report.gap - report.prediction) <= 3 * report.stderr
    assert report.prediction == pytest.approx(linear_closed_form_gap(ae, 0.1), rel=1e-6)
