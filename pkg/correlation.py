"""
Модель корреляции портов флюидной антенны: mu(W), ковариация, генерация каналов
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from specfun import hyp1f2_half, j1_over_x

logger = logging.getLogger(__name__)

MU_CEILING = 1.0 - 1e-12
_UPPER_SLACK = 1e-9
_LOWER_SLACK = 1e-12


class NumericInconsistencyError(ArithmeticError):
    """Подкоренное выражение mu(W) вне допустимой полосы"""

    def __init__(self, W: float, radicand: float):
        super().__init__(f"mu(W) radicand {radicand!r} at W={W} lies outside [-1e-12, 1+1e-9]")
        self.W = W
        self.radicand = radicand


def mu_from_w(W: float) -> float:
    """Коэффициент корреляции портов по длине апертуры W (в длинах волн)"""
    if not W > 0 or not math.isfinite(W):
        raise ValueError(f"W must be positive and finite, got {W}")
    x = 2.0 * math.pi * W
    radicand = 2.0 * (hyp1f2_half(-(math.pi * W) ** 2) - j1_over_x(x))
    if radicand > 1.0 + _UPPER_SLACK or radicand < -_LOWER_SLACK:
        raise NumericInconsistencyError(W, radicand)
    if radicand >= MU_CEILING ** 2:
        return MU_CEILING
    if radicand <= 0.0:
        return 0.0
    return math.sqrt(radicand)


@dataclass(frozen=True)
class CorrelationModel:
    mu: float
    W: Optional[float] = None
    sigma_h2: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.mu < 1.0:
            raise ValueError(f"mu must lie in [0, 1), got {self.mu}")
        if not self.sigma_h2 > 0:
            raise ValueError(f"sigma_h2 must be positive, got {self.sigma_h2}")
        if self.W is not None and not self.W > 0:
            raise ValueError(f"W must be positive, got {self.W}")

    @classmethod
    def from_w(cls, W: float, sigma_h2: float = 1.0) -> "CorrelationModel":
        return cls(mu=mu_from_w(W), W=W, sigma_h2=sigma_h2)

    @classmethod
    def from_mu(cls, mu: float, sigma_h2: float = 1.0) -> "CorrelationModel":
        return cls(mu=mu, W=None, sigma_h2=sigma_h2)

    @classmethod
    def resolve(cls, W: Optional[float] = None, mu: Optional[float] = None,
                sigma_h2: float = 1.0) -> "CorrelationModel":
        """Явный mu имеет приоритет над W"""
        if mu is not None:
            if W is not None:
                logger.warning(f"Both mu={mu} and W={W} given; explicit mu wins")
            return cls.from_mu(mu, sigma_h2)
        if W is None:
            raise ValueError("either W or mu must be given")
        return cls.from_w(W, sigma_h2)


@dataclass(frozen=True)
class FadingVector:
    h: np.ndarray

    def __post_init__(self):
        if self.h.ndim != 1 or self.h.size < 1:
            raise ValueError(f"fading vector must be 1-D with N >= 1 entries, got shape {self.h.shape}")

    def __len__(self) -> int:
        return self.h.size


def covariance_entry(i: int, j: int, model: CorrelationModel, n_ports: int) -> float:
    """Элемент ковариационной матрицы (индексы с 1)"""
    if not (1 <= i <= n_ports and 1 <= j <= n_ports):
        raise IndexError(f"port indices ({i}, {j}) outside 1..{n_ports}")
    if i == j:
        return model.sigma_h2
    return model.mu ** 2 * model.sigma_h2


def covariance_matrix(n_ports: int, model: CorrelationModel) -> np.ndarray:
    off = model.mu ** 2 * model.sigma_h2
    cov = np.full((n_ports, n_ports), off)
    np.fill_diagonal(cov, model.sigma_h2)
    return cov


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def sample_fading_batch(n_trials: int, n_ports: int, model: CorrelationModel,
                        rng: np.random.Generator) -> np.ndarray:
    """Каналы (n_trials, N) через один общий фактор: h_k = s(mu x0 + sqrt(1-mu^2) x_k)"""
    common = _complex_normal(rng, (n_trials, 1))
    private = _complex_normal(rng, (n_trials, n_ports))
    sigma_h = math.sqrt(model.sigma_h2)
    return sigma_h * (model.mu * common + math.sqrt(1.0 - model.mu ** 2) * private)


def sample_fading(n_ports: int, model: CorrelationModel, rng: np.random.Generator) -> FadingVector:
    """Один вектор замираний"""
    if n_ports < 1:
        raise ValueError(f"N must be >= 1, got {n_ports}")
    return FadingVector(sample_fading_batch(1, n_ports, model, rng)[0])


def sample_fading_dense(n_trials: int, n_ports: int, model: CorrelationModel,
                        rng: np.random.Generator) -> np.ndarray:
    """Каналы через разложение Холецкого полной ковариации (эталон для проверок)"""
    cov = covariance_matrix(n_ports, model)
    factor = np.linalg.cholesky(cov)
    white = _complex_normal(rng, (n_trials, n_ports))
    return white @ factor.T
