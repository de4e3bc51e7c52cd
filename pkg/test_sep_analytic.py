"""
Тесты вероятности ошибки: точная формула, квадратура, асимптотика
"""

import logging
import math

import mpmath
import numpy as np
import pytest

import sep_analytic
from cf_engine import CfTruncationError, FasConfig
from compositions import EtaSignature
from correlation import CorrelationModel
from mc_sim import simulate_ser
from modem import ModulationScheme, SchemeKind
from sep_analytic import (
    ClosedFormUnavailable, IntegralSpec, PartialFractionCoeffs, SepMethod, SepResult, calK, craig_terms,
    evaluate_J, fit_diversity_order, integral_J, integral_J_asymptotic, integral_J_quadrature,
    partial_fraction_coeffs, sep, sep_ask, sep_asymptotic, sep_bfsk, sep_psk, sep_qam, verify_partial_fractions,
)
from utils import SimpleCache


def make_config(N, K, mu, gamma):
    return FasConfig(N=N, K=K, model=CorrelationModel.from_mu(mu)).with_gamma(gamma)


def test_integral_spec_validation():
    cfg = make_config(2, 1, 0.3, 1.0)
    with pytest.raises(ValueError):
        IntegralSpec(c=0.0, Theta=1.0, cfg=cfg)
    with pytest.raises(ValueError):
        IntegralSpec(c=1.0, Theta=math.pi, cfg=cfg)
    assert IntegralSpec(c=0.5, Theta=math.pi / 4, cfg=cfg).x_abs_min == pytest.approx(1.0)
    assert IntegralSpec(c=0.5, Theta=3 * math.pi / 4, cfg=cfg).x_abs_min == pytest.approx(0.5)


def test_sep_result_rejects_out_of_range():
    with pytest.raises(ValueError):
        SepResult(value=1.5, method=SepMethod.CLOSED_FORM)
    assert SepResult(value=0.1, method=SepMethod.QUADRATURE, diagnostics={'p': 3, 'tail': 1e-12}).describe() \
        == 'p=3;tail=1.000e-12'


def test_single_branch_closed_form():
    spec = IntegralSpec(c=1.0, Theta=math.pi / 2, cfg=make_config(1, 1, 0.0, 10.0))
    expected = 0.5 * (1.0 - math.sqrt(10.0 / 11.0))
    assert integral_J(spec).value == pytest.approx(expected, rel=1e-10)
    assert integral_J_quadrature(spec).value == pytest.approx(expected, rel=1e-9)


def test_vanishing_scale_gives_angle_share():
    spec = IntegralSpec(c=1e-14, Theta=math.pi / 2, cfg=make_config(2, 1, 0.0, 1.0))
    assert integral_J(spec).value == pytest.approx(0.5, abs=1e-6)
    assert integral_J_quadrature(spec).value == pytest.approx(0.5, abs=1e-6)


def test_short_interval_gives_small_value():
    spec = IntegralSpec(c=1.0, Theta=1e-3, cfg=make_config(2, 1, 0.3, 1.0))
    assert 0.0 <= integral_J(spec).value < 1e-6


@pytest.mark.parametrize('N,K,mu', [(2, 1, 0.3), (3, 2, 0.5), (3, 3, 0.3), (4, 2, 0.3), (3, 1, 0.0)])
@pytest.mark.parametrize('c,theta', [(0.5, math.pi / 2), (1.0, math.pi / 4), (0.3, 3 * math.pi / 4)])
def test_closed_form_matches_quadrature(N, K, mu, c, theta):
    spec = IntegralSpec(c=c, Theta=theta, cfg=make_config(N, K, mu, 5.0))
    closed = integral_J(spec)
    assert closed.method is SepMethod.CLOSED_FORM
    assert closed.value == pytest.approx(integral_J_quadrature(spec).value, rel=1e-8)


def test_quadrature_value_is_bounded():
    spec = IntegralSpec(c=0.5, Theta=3 * math.pi / 4, cfg=make_config(3, 2, 0.7, 5.0))
    value = integral_J_quadrature(spec).value
    assert 0.0 < value < 0.75


def test_partial_fractions_reconstruct_rational_function():
    spec = IntegralSpec(c=0.7, Theta=math.pi / 2, cfg=make_config(4, 2, 0.5, 3.0))
    with mpmath.workdps(60):
        coeffs = partial_fraction_coeffs(EtaSignature(eta=(3, 2, 1), K=2), spec)
        assert coeffs.check([0.0, 0.3, 1.0, 5.0, 40.0], rel_tol=1e-30)


def test_partial_fraction_poles_keep_exact_ratios():
    spec = IntegralSpec(c=0.37, Theta=math.pi / 2, cfg=make_config(5, 2, 0.6, 7.0))
    with mpmath.workdps(50):
        coeffs = partial_fraction_coeffs(EtaSignature(eta=(4, 2, 1, 1), K=2), spec)
        assert all(isinstance(pole, mpmath.mpf) for pole in coeffs.poles)
        assert abs(coeffs.poles[3] / coeffs.poles[0] - mpmath.mpf(5) / 2) < mpmath.mpf(10) ** -45
        assert coeffs.check([0.0, 5.0, 40.0, 100.0], rel_tol=1e-20)
    assert verify_partial_fractions(spec, 6)


def test_failed_reconstruction_check_falls_back(monkeypatch):
    spec = IntegralSpec(c=0.83, Theta=math.pi / 2, cfg=make_config(3, 2, 0.4, 6.0))
    monkeypatch.setattr(sep_analytic, '_CHECK_CACHE', SimpleCache(max_size=16))
    monkeypatch.setattr(PartialFractionCoeffs, 'check', lambda self, points, rel_tol=1e-8: False)
    with pytest.raises(ClosedFormUnavailable):
        integral_J(spec)
    result = evaluate_J(spec)
    assert result.method is SepMethod.QUADRATURE
    assert result.value == pytest.approx(integral_J_quadrature(spec).value, rel=1e-12)


def test_infeasible_series_falls_back(caplog):
    caplog.set_level(logging.WARNING)
    cfg = FasConfig.from_snr_db(6, 3, CorrelationModel.from_mu(0.97), 0.0)
    spec = IntegralSpec(c=0.5, Theta=math.pi / 2, cfg=cfg)
    with pytest.raises((CfTruncationError, ClosedFormUnavailable)):
        integral_J(spec)
    result = evaluate_J(spec)
    assert result.method is SepMethod.QUADRATURE
    assert result.diagnostics['path'] == 'quad_conditional'
    assert 0.0 < result.value < 0.5
    assert 'falling back' in caplog.text


def test_evaluate_rejects_unknown_method():
    spec = IntegralSpec(c=0.5, Theta=math.pi / 2, cfg=make_config(2, 1, 0.3, 1.0))
    with pytest.raises(ValueError):
        evaluate_J(spec, method='series')


def test_single_branch_bpsk_and_bfsk():
    cfg = make_config(1, 1, 0.0, 10.0)
    assert sep_ask(2, cfg).value == pytest.approx(0.5 * (1.0 - math.sqrt(10.0 / 11.0)), rel=1e-10)
    assert sep_bfsk(cfg).value == pytest.approx(0.5 * (1.0 - math.sqrt(10.0 / 12.0)), rel=1e-10)
    assert sep_bfsk(cfg).value == pytest.approx(0.043563, abs=1e-5)


@pytest.mark.parametrize('mu', [0.0, 0.4])
def test_bpsk_equals_binary_ask(mu):
    cfg = make_config(3, 2, mu, 8.0)
    assert sep_psk(2, cfg).value == pytest.approx(sep_ask(2, cfg).value, rel=1e-14)


def test_low_snr_limits():
    cfg = make_config(3, 2, 0.3, 1e-9)
    assert sep_ask(4, cfg).value == pytest.approx(0.75, abs=1e-3)
    assert sep_psk(8, cfg).value == pytest.approx(7 / 8, abs=1e-3)
    assert sep_qam(4, cfg).value == pytest.approx(0.75, abs=1e-3)
    assert sep_bfsk(cfg).value == pytest.approx(0.5, abs=1e-3)


def test_craig_terms_cover_every_scheme():
    qam = craig_terms(ModulationScheme(SchemeKind.QAM, 16))
    assert len(qam) == 2
    assert qam[0][1] == pytest.approx(0.1)
    assert craig_terms(ModulationScheme(SchemeKind.BFSK, 2)) == [(1.0, 0.5, math.pi / 2)]


@pytest.mark.parametrize('scheme,N,K,mu,gamma', [
    (ModulationScheme(SchemeKind.PSK, 8), 4, 2, 0.5, 20.0),
    (ModulationScheme(SchemeKind.QAM, 4), 3, 2, 0.5, 10.0),
    (ModulationScheme(SchemeKind.ASK, 4), 3, 1, 0.3, 10.0),
    (ModulationScheme(SchemeKind.BFSK, 2), 4, 3, 0.5, 10.0),
])
def test_sep_exact_matches_quadrature(scheme, N, K, mu, gamma):
    cfg = make_config(N, K, mu, gamma)
    exact = sep(scheme, cfg, 'exact')
    assert exact.method is SepMethod.CLOSED_FORM
    assert exact.value == pytest.approx(sep(scheme, cfg, 'quad').value, rel=1e-8)


def test_sep_decreases_with_snr():
    scheme = ModulationScheme(SchemeKind.QAM, 16)
    values = [sep(scheme, make_config(3, 2, 0.3, g)).value for g in (1.0, 3.0, 10.0, 30.0, 100.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_sep_improves_with_more_selected_ports():
    scheme = ModulationScheme(SchemeKind.ASK, 4)
    values = [sep(scheme, make_config(4, K, 0.3, 10.0)).value for K in (1, 2, 3, 4)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_sep_dispatcher_validation():
    with pytest.raises(ValueError):
        sep(ModulationScheme(SchemeKind.ASK, 2), make_config(2, 1, 0.3, 1.0), 'fast')


def test_calK_values():
    assert calK(make_config(1, 1, 0.6, 1.0)) == pytest.approx(1.0)
    assert calK(make_config(2, 1, 0.0, 1.0)) == pytest.approx(1.0)
    assert calK(make_config(4, 2, 0.5, 1.0)) == pytest.approx(5.90625, rel=1e-14)


def test_bfsk_asymptote_single_branch():
    cfg = make_config(1, 1, 0.0, 100.0)
    assert sep_asymptotic(ModulationScheme(SchemeKind.BFSK, 2), cfg).value == pytest.approx(0.005, rel=1e-12)
    assert sep_bfsk(cfg).value == pytest.approx(0.5 * (1.0 - math.sqrt(100.0 / 102.0)), rel=1e-10)


@pytest.mark.parametrize('N', [1, 2, 3, 5])
def test_qam_asymptote_matches_two_term_structure(N):
    cfg = make_config(N, 1, 0.4, 1e3)
    M = 16
    edge = 1.0 - 1.0 / math.sqrt(M)
    c = 3.0 / (2.0 * (M - 1))
    expected = (4.0 * edge * integral_J_asymptotic(c, math.pi / 2, cfg)
                - 4.0 * edge ** 2 * integral_J_asymptotic(c, math.pi / 4, cfg))
    assert sep_asymptotic(ModulationScheme(SchemeKind.QAM, M), cfg).value == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize('M', [2, 4, 8])
def test_ask_and_psk_asymptotes_match_integral_form(M):
    cfg = make_config(3, 2, 0.5, 1e3)
    ask = 2.0 * (M - 1) / M * integral_J_asymptotic(3.0 / (M * M - 1), math.pi / 2, cfg)
    psk = integral_J_asymptotic(math.sin(math.pi / M) ** 2, math.pi * (M - 1) / M, cfg)
    assert sep_asymptotic(ModulationScheme(SchemeKind.ASK, M), cfg).value == pytest.approx(ask, rel=1e-10)
    assert sep_asymptotic(ModulationScheme(SchemeKind.PSK, M), cfg).value == pytest.approx(psk, rel=1e-10)


@pytest.mark.parametrize('scheme', [
    ModulationScheme(SchemeKind.ASK, 4), ModulationScheme(SchemeKind.PSK, 8),
    ModulationScheme(SchemeKind.QAM, 16), ModulationScheme(SchemeKind.BFSK, 2),
])
def test_asymptote_converges_to_exact(scheme):
    cfg = make_config(3, 2, 0.5, 1e4)
    ratio = sep(scheme, cfg, 'asym').value / sep(scheme, cfg).value
    assert ratio == pytest.approx(1.0, abs=0.1)


def test_diversity_order_equals_port_count():
    slope = fit_diversity_order(ModulationScheme(SchemeKind.BFSK, 2), make_config(3, 2, 0.5, 1.0),
                                np.logspace(3, 5, 5))
    assert slope == pytest.approx(-3.0, rel=0.05)


def test_diversity_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit_diversity_order(ModulationScheme(SchemeKind.BFSK, 2), make_config(2, 1, 0.3, 1.0), [10.0])


def test_gains_from_more_selected_ports_shrink():
    scheme = ModulationScheme(SchemeKind.PSK, 4)
    values = [sep(scheme, make_config(4, K, 0.5, 10.0)).value for K in (1, 2, 3, 4)]
    gains = [a - b for a, b in zip(values, values[1:])]
    assert all(g > 0.0 for g in gains)
    assert gains[0] > gains[1] > gains[2]


def test_wider_aperture_lowers_sep_for_two_ports():
    scheme = ModulationScheme(SchemeKind.BFSK, 2)
    values = []
    for W in (0.05, 0.2, 0.5, 1.0):
        cfg = FasConfig.from_snr_db(2, 1, CorrelationModel.from_w(W), 5.0)
        result = sep(scheme, cfg)
        assert math.isfinite(result.value)
        values.append(result.value)
    assert all(a > b for a, b in zip(values, values[1:]))


def test_default_configuration_matches_monte_carlo():
    cfg = FasConfig.from_snr_db(10, 4, CorrelationModel.from_w(0.2), 10.0)
    scheme = ModulationScheme(SchemeKind.BFSK, 2)
    result = sep(scheme, cfg)
    assert result.diagnostics['path'] == 'quad_conditional'
    assert 0.0 < result.value < 0.5
    estimate = simulate_ser(cfg, scheme, max_trials=50_000, target_errors=50_000, seed=3, workers=1)
    sigma = math.sqrt(result.value * (1.0 - result.value) / estimate.trials)
    assert abs(estimate.ser - result.value) <= 4.0 * sigma
