"""
Тесты наборов численных проверок
"""

import math

import pytest

import validate
from sep_analytic import ClosedFormUnavailable, IntegralSpec
from validate import SUITES, ValidationSuite, _cfg


def test_oracle_grid_covers_acceptance_grid():
    names = [name for name, _ in ValidationSuite().oracle_checks()]
    # 21 пара (N, K) при N <= 6, по 4 значения mu, c, theta и 3 значения Gamma
    assert len(names) == 21 * 4 * 4 * 4 * 3
    assert any('N=6,K=1,' in name for name in names)
    assert any(',c=0.5,' in name for name in names)
    assert any('theta=2.0944' in name for name in names)


def test_in_domain_oracle_point_passes():
    spec = IntegralSpec(c=1.0, Theta=2 * math.pi / 3, cfg=_cfg(3, 2, 0.3, 5.0))
    passed, detail = ValidationSuite._closed_vs_quadrature(spec)
    assert passed is True, detail


def test_unavailable_closed_form_inside_domain_fails(monkeypatch):
    def unavailable(spec):
        raise ClosedFormUnavailable('reconstruction check failed')

    monkeypatch.setattr(validate, 'integral_J', unavailable)
    spec = IntegralSpec(c=0.5, Theta=math.pi / 2, cfg=_cfg(2, 1, 0.3, 5.0))
    passed, detail = ValidationSuite._closed_vs_quadrature(spec)
    assert passed is False
    assert 'reason=ClosedFormUnavailable' in detail


def test_point_outside_closed_form_domain_is_skipped():
    spec = IntegralSpec(c=0.1, Theta=math.pi / 2, cfg=_cfg(6, 1, 0.95, 0.5))
    passed, detail = ValidationSuite._closed_vs_quadrature(spec)
    assert passed is None
    assert 'outside_closed_form=1' in detail


def test_unknown_suite_is_rejected():
    assert 'oracle' in SUITES
    with pytest.raises(ValueError):
        ValidationSuite().get_checks('fast')
