"""
Тесты модели корреляции портов и генераторов замираний
"""

import logging
import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from correlation import (
    MU_CEILING, CorrelationModel, FadingVector, covariance_entry, covariance_matrix, mu_from_w,
    sample_fading, sample_fading_batch, sample_fading_dense,
)


def test_mu_for_short_aperture():
    assert mu_from_w(0.2) == pytest.approx(0.968, abs=1e-3)


@pytest.mark.parametrize('W', [0.5, 1.0, 1.75, 2.5, 5.0])
def test_mu_matches_quadrature_oracle(W):
    a = math.pi * W
    int_j0, _ = integrate.quad(lambda t: special.j0(t), 0.0, 2.0 * a, epsabs=1e-14, epsrel=1e-13, limit=200)
    radicand = 2.0 * (int_j0 / (2.0 * a) - special.j1(2.0 * a) / (2.0 * a))
    assert mu_from_w(W) == pytest.approx(math.sqrt(radicand), rel=1e-9)


def test_mu_limits():
    assert mu_from_w(1e-4) > 0.999
    assert mu_from_w(1e-4) <= MU_CEILING
    assert mu_from_w(1e9) < 1e-3


def test_mu_is_continuous_where_1f2_switches_branch():
    # (pi W)^2 = 30 near W = 1.7435
    switch = math.sqrt(30.0) / math.pi
    below, above = mu_from_w(switch - 1e-4), mu_from_w(switch + 1e-4)
    assert abs(below - above) < 1e-3
    grid = np.linspace(1.6, 1.9, 31)
    values = np.array([mu_from_w(W) for W in grid])
    assert np.max(np.abs(np.diff(values))) < 0.02


@pytest.mark.parametrize('W', [0.0, -1.0, float('inf'), float('nan')])
def test_mu_rejects_invalid_aperture(W):
    with pytest.raises(ValueError):
        mu_from_w(W)


def test_mu_decreases_over_short_apertures():
    values = [mu_from_w(W) for W in (0.05, 0.1, 0.2, 0.3, 0.4)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_model_validation():
    with pytest.raises(ValueError):
        CorrelationModel(mu=1.0)
    with pytest.raises(ValueError):
        CorrelationModel(mu=0.5, sigma_h2=0.0)
    model = CorrelationModel.from_w(0.2)
    assert model.W == 0.2
    assert 0.0 <= model.mu < 1.0


def test_explicit_mu_wins_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        model = CorrelationModel.resolve(W=0.2, mu=0.3)
    assert model.mu == 0.3
    assert model.W is None
    assert 'explicit mu wins' in caplog.text


def test_resolve_needs_a_parameter():
    with pytest.raises(ValueError):
        CorrelationModel.resolve()


def test_covariance_entries():
    model = CorrelationModel.from_mu(0.968)
    assert covariance_entry(2, 2, model, 4) == 1.0
    assert covariance_entry(1, 2, model, 4) == pytest.approx(0.937, abs=1e-3)
    assert covariance_entry(1, 2, CorrelationModel.from_mu(0.0), 4) == 0.0
    with pytest.raises(IndexError):
        covariance_entry(0, 1, model, 4)
    with pytest.raises(IndexError):
        covariance_entry(1, 5, model, 4)


def test_covariance_matrix_is_positive_definite():
    cov = covariance_matrix(5, CorrelationModel.from_mu(0.9, sigma_h2=2.0))
    assert cov.shape == (5, 5)
    assert np.allclose(np.diag(cov), 2.0)
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_sample_fading_shape_and_type():
    rng = np.random.default_rng(7)
    h = sample_fading(4, CorrelationModel.from_mu(0.5), rng)
    assert isinstance(h, FadingVector)
    assert len(h) == 4
    assert np.iscomplexobj(h.h)
    with pytest.raises(ValueError):
        sample_fading(0, CorrelationModel.from_mu(0.5), rng)


def test_nearly_full_correlation_gives_identical_ports():
    rng = np.random.default_rng(3)
    h = sample_fading_batch(1000, 4, CorrelationModel.from_mu(0.999999), rng)
    spread = np.abs(h - h[:, :1]).max()
    assert spread < 0.05


@pytest.mark.parametrize('sampler', [sample_fading_batch, sample_fading_dense])
def test_sample_covariance_matches_model(sampler):
    model = CorrelationModel.from_mu(0.6)
    trials = 200_000
    h = sampler(trials, 3, model, np.random.default_rng(11))
    empirical = (h.conj().T @ h).real / trials
    # стандартная ошибка оценки порядка 1/sqrt(trials)
    assert np.allclose(empirical, covariance_matrix(3, model), atol=5.0 / math.sqrt(trials))


def test_one_factor_and_cholesky_samplers_agree_in_distribution():
    model = CorrelationModel.from_mu(0.7)
    trials = 20_000
    batch = np.abs(sample_fading_batch(trials, 4, model, np.random.default_rng(21))) ** 2
    dense = np.abs(sample_fading_dense(trials, 4, model, np.random.default_rng(22))) ** 2
    strongest = stats.ks_2samp(batch.max(axis=1), dense.max(axis=1))
    best_pair = stats.ks_2samp(np.sort(batch, axis=1)[:, -2:].sum(axis=1),
                              np.sort(dense, axis=1)[:, -2:].sum(axis=1))
    assert strongest.pvalue > 1e-3
    assert best_pair.pvalue > 1e-3
