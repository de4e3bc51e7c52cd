"""
Тесты созвездий и ML-детекторов
"""

import math

import numpy as np
import pytest

from modem import (
    ModulationScheme, SchemeKind, build_constellation, detect, detect_ask, detect_bfsk, detect_ml_generic,
    detect_psk,
)


def test_scheme_parsing_and_labels():
    assert ModulationScheme.parse('ASK', 4).label == '4-ASK'
    assert ModulationScheme.parse('bfsk', 8) == ModulationScheme(SchemeKind.BFSK, 2)
    assert ModulationScheme.parse('qam', 16).label == '16-QAM'
    with pytest.raises(ValueError):
        ModulationScheme.parse('fsk', 4)
    with pytest.raises(ValueError):
        ModulationScheme(SchemeKind.QAM, 8)
    with pytest.raises(ValueError):
        ModulationScheme(SchemeKind.PSK, 1)


def test_ask_points():
    two = build_constellation(ModulationScheme(SchemeKind.ASK, 2))
    assert np.allclose(two.points, [-1.0, 1.0])
    four = build_constellation(ModulationScheme(SchemeKind.ASK, 4))
    assert np.allclose(four.points, [-1.3416408, -0.4472136, 0.4472136, 1.3416408], atol=1e-7)
    assert four.mean_energy == pytest.approx(1.0)


def test_psk_points():
    qpsk = build_constellation(ModulationScheme(SchemeKind.PSK, 4))
    assert np.allclose(qpsk.points, [1, 1j, -1, -1j], atol=1e-15)


@pytest.mark.parametrize('kind,M', [('ask', 8), ('psk', 8), ('qam', 4), ('qam', 16), ('qam', 64), ('bfsk', 2)])
def test_mean_energy_matches_request(kind, M):
    constellation = build_constellation(ModulationScheme.parse(kind, M), E_av=2.5)
    assert len(constellation) == M
    assert constellation.mean_energy == pytest.approx(2.5, rel=1e-12)


def test_build_rejects_bad_energy():
    with pytest.raises(ValueError):
        build_constellation(ModulationScheme(SchemeKind.ASK, 2), E_av=0.0)


@pytest.mark.parametrize('kind,M', [('ask', 4), ('psk', 8), ('qam', 16), ('bfsk', 2)])
def test_noiseless_detection_recovers_symbol(kind, M):
    constellation = build_constellation(ModulationScheme.parse(kind, M))
    h_norm = 1.7
    for m, point in enumerate(constellation.points):
        assert detect_ml_generic(h_norm * point, h_norm, constellation) == m
        assert detect(h_norm * point, h_norm, constellation) == m


def test_generic_tie_breaks_to_lower_index():
    bpsk = build_constellation(ModulationScheme(SchemeKind.ASK, 2))
    assert detect_ml_generic(0.0, 1.0, bpsk) == 0


def test_ask_threshold():
    constellation = build_constellation(ModulationScheme(SchemeKind.ASK, 4))
    s = constellation.points.real
    h_norm = 2.0
    threshold = h_norm * (s[1] + s[2]) / 2.0
    assert detect_ask(threshold + 1e-9, h_norm, constellation) == 2
    assert detect_ask(threshold - 1e-9, h_norm, constellation) == 1
    assert detect_ask(0.3 + 5j, 1.0, build_constellation(ModulationScheme(SchemeKind.ASK, 2))) == 1


def test_psk_sector_boundary():
    constellation = build_constellation(ModulationScheme(SchemeKind.PSK, 4))
    boundary = math.pi / 4
    assert detect_psk(np.exp(1j * (boundary + 1e-6)), constellation) == 1
    assert detect_psk(np.exp(1j * (boundary - 1e-6)), constellation) == 0


def test_bfsk_decisions():
    assert detect_bfsk(1 + 0j) == 0
    assert detect_bfsk(0 + 1j) == 1
    assert detect_bfsk(0.5 + 0.5j) == 0


@pytest.mark.parametrize('kind,M', [('ask', 2), ('ask', 4), ('ask', 8), ('psk', 4), ('psk', 8), ('bfsk', 2)])
def test_fast_detectors_match_generic(kind, M):
    rng = np.random.default_rng(2024)
    constellation = build_constellation(ModulationScheme.parse(kind, M))
    size = 100_000
    z = 2.0 * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    h_norm = rng.uniform(0.1, 3.0, size)
    generic = detect_ml_generic(z, h_norm, constellation)
    fast = detect(z, h_norm, constellation)
    assert np.array_equal(fast, generic)
