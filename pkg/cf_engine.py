"""
Характеристическая функция SNR на выходе best-K MRC приемника флюидной антенны
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy import special, stats

from compositions import EtaSignature
from correlation import CorrelationModel
from settings import settings
from specfun import marcum_q1_log_pair
from utils import db_to_linear

logger = logging.getLogger(__name__)

# p! в double ограничивает порядок ряда
SERIES_ORDER_LIMIT = 170
_LAGUERRE_NODES = 64
_INNER_SPAN = 12.0
_SCAN_POINTS = 97
_INNER_NODES = 64
# доля пика exp(-45), ниже которой вклад отбрасывается
_LOG_CUTOFF = 45.0
_MARCUM_BLOCK = 1024


@dataclass(frozen=True)
class FasConfig:
    N: int
    K: int
    model: CorrelationModel
    E_av: float = 1.0
    sigma_n2: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not 1 <= self.K <= self.N:
            raise ValueError(f"K must satisfy 1 <= K <= N={self.N}, got {self.K}")
        if not self.E_av > 0:
            raise ValueError(f"E_av must be positive, got {self.E_av}")
        if not self.sigma_n2 > 0:
            raise ValueError(f"sigma_n2 must be positive, got {self.sigma_n2}")

    @property
    def gamma_av(self) -> float:
        return self.E_av * self.model.sigma_h2 / self.sigma_n2

    @property
    def mu(self) -> float:
        return self.model.mu

    @property
    def n_tilde(self) -> int:
        return self.N - self.K + 1

    @classmethod
    def from_snr_db(cls, N: int, K: int, model: CorrelationModel, snr_db: float,
                    sigma_n2: float = 1.0) -> "FasConfig":
        """Конфигурация с заданным средним SNR в дБ (меняется E_av)"""
        gamma = db_to_linear(snr_db)
        return cls(N=N, K=K, model=model, E_av=gamma * sigma_n2 / model.sigma_h2, sigma_n2=sigma_n2)

    def with_gamma(self, gamma_av: float) -> "FasConfig":
        if not gamma_av > 0:
            raise ValueError(f"gamma_av must be positive, got {gamma_av}")
        return replace(self, E_av=gamma_av * self.sigma_n2 / self.model.sigma_h2)

    def with_ports(self, N: Optional[int] = None, K: Optional[int] = None) -> "FasConfig":
        return replace(self, N=self.N if N is None else N, K=self.K if K is None else K)


@dataclass(frozen=True)
class CfTruncation:
    p_max: int
    tail_bound: float
    tol: float


class CfTruncationError(RuntimeError):
    """Точность ряда недостижима в пределах p_max"""

    def __init__(self, message: str, partial_value: float, truncation: CfTruncation):
        super().__init__(message)
        self.partial_value = partial_value
        self.truncation = truncation


def series_constants(cfg: FasConfig) -> Tuple[float, float, float]:
    """(префактор, знаменатель геометрической прогрессии по p, rho = N * знаменатель)"""
    mu2 = cfg.mu ** 2
    denom = 1.0 + (cfg.N - 1) * mu2
    ratio = mu2 / denom
    return (1.0 - mu2) / denom, ratio, cfg.N * ratio


def pole_factors(x, cfg: FasConfig) -> np.ndarray:
    """Множители 1 - x (1-mu^2) K Gamma / (K+j-1), j = 1..N-K+1 (последняя ось)"""
    x = np.asarray(x, dtype=float)
    scale = (1.0 - cfg.mu ** 2) * cfg.gamma_av * cfg.K
    denominators = cfg.K + np.arange(cfg.n_tilde, dtype=float)
    return 1.0 - x[..., None] * scale / denominators


def _check_arguments(xs: np.ndarray) -> None:
    if not np.all(np.isfinite(xs)):
        raise ValueError("c.f. arguments must be finite")
    if np.any(xs > 0):
        raise ValueError(f"c.f. is evaluated on x <= 0 only, got max x={xs.max()}")


def cf_term_I(x: float, signature: EtaSignature, cfg: FasConfig) -> float:
    """Произведение полюсных множителей для одной η-сигнатуры"""
    if x > 0:
        raise ValueError(f"x must be <= 0, got {x}")
    if len(signature.eta) != cfg.n_tilde:
        raise ValueError(f"signature {signature.eta} does not match N={cfg.N}, K={cfg.K}")
    factors = pole_factors(x, cfg)
    return float(np.exp(-np.dot(signature.eta, np.log(factors))))


def cf_value_iid(x, cfg: FasConfig):
    """Замкнутая форма при mu = 0: (1 - x Gamma)^(-K) prod_{k>K} (1 - x K Gamma / k)^(-1)"""
    xs = np.asarray(x, dtype=float)
    ports = np.arange(cfg.K + 1, cfg.N + 1, dtype=float)
    gamma = cfg.gamma_av
    value = (1.0 - xs * gamma) ** (-cfg.K)
    if ports.size:
        value = value / np.prod(1.0 - xs[..., None] * cfg.K * gamma / ports, axis=-1)
    return float(value) if value.ndim == 0 else value


def cf_value_full_mrc(x, cfg: FasConfig):
    """Замкнутая форма при K = N (MRC по всем портам)"""
    if cfg.K != cfg.N:
        raise ValueError(f"full MRC closed form needs K = N, got K={cfg.K}, N={cfg.N}")
    xs = np.asarray(x, dtype=float)
    a = -xs * cfg.gamma_av
    mu2 = cfg.mu ** 2
    value = (1.0 + a * (1.0 - mu2)) ** (-(cfg.N - 1)) / (1.0 + a * (1.0 - mu2 + cfg.N * mu2))
    return float(value) if value.ndim == 0 else value


def tail_bound(x_abs: float, cfg: FasConfig, order: int) -> float:
    """Оценка сверху остатка ряда после члена order"""
    pref, _, rho = series_constants(cfg)
    if rho == 0.0:
        return 0.0
    d = 1.0 + x_abs * (1.0 - cfg.mu ** 2) * cfg.gamma_av * cfg.K / cfg.N
    ratio = rho / d
    return pref * d ** (-cfg.N) * ratio ** (order + 1) / (1.0 - ratio)


def term_bound(x_abs: float, cfg: FasConfig, order: int) -> float:
    pref, _, rho = series_constants(cfg)
    d = 1.0 + x_abs * (1.0 - cfg.mu ** 2) * cfg.gamma_av * cfg.K / cfg.N
    return pref * rho ** order * d ** (-(order + cfg.N))


def order_for_tolerance(x_abs: float, cfg: FasConfig, tol: float, limit: int) -> Optional[int]:
    """Наименьший порядок с остатком <= tol и последним членом < tol/10; None, если больше limit"""
    for order in range(limit + 1):
        if tail_bound(x_abs, cfg, order) <= tol and term_bound(x_abs, cfg, order) < tol / 10:
            return order
    return None


def series_terms(xs: np.ndarray, cfg: FasConfig, order: int) -> np.ndarray:
    """Члены ряда p = 0..order для каждого x: массив (order+1, len(xs))"""
    if order > SERIES_ORDER_LIMIT:
        raise ValueError(f"series order {order} exceeds {SERIES_ORDER_LIMIT}")
    pref, ratio, _ = series_constants(cfg)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    size = order + 1
    index = np.arange(size)

    # spread[l, m] = ratio^l / l! * C(m, l), где m = d + l
    spread = np.zeros((size, size))
    for l in range(size):
        for m in range(l, size):
            spread[l, m] = ratio ** l / math.factorial(l) * math.comb(m, l)

    lag = index[:, None] - index[None, :]
    descend_mask = lag >= 0
    lag = np.where(descend_mask, lag, 0)
    a = (1.0 - cfg.mu ** 2) * cfg.gamma_av

    # state[L, d, x]: сумма по уже пройденным портам
    state = np.zeros((size, size, xs.size))
    state[0, 0, :] = 1.0
    for k in range(1, cfg.N + 1):
        pole = 1.0 - xs * a * (1.0 if k <= cfg.K else cfg.K / k)
        spread_state = np.zeros_like(state)
        for l in range(size):
            spread_state[l:, l:, :] += state[:size - l, :size - l, :] * spread[l, l:][None, :, None]
        # q_k уменьшает d на q_k с множителем (k * pole)^(-q_k)
        descend = (1.0 / (k * pole))[None, None, :] ** lag[:, :, None] * descend_mask[:, :, None]
        state = np.einsum('amx,mnx->anx', spread_state, descend) / pole[None, None, :]

    factorials = np.array([math.factorial(p) for p in range(size)], dtype=float)
    return pref * factorials[:, None] * state[:, 0, :]


def _column_sums(terms: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(terms[:, j]) for j in range(terms.shape[1])])


def cf_values(xs, cfg: FasConfig, tol: Optional[float] = None, rel_tol: Optional[float] = None,
              p_max: Optional[int] = None) -> Tuple[np.ndarray, CfTruncation]:
    """Ψ в точках xs <= 0 через ряд; одна общая оценка усечения на весь набор"""
    tol = settings.tol if tol is None else tol
    rel_tol = settings.rel_tol if rel_tol is None else rel_tol
    p_max = settings.p_max if p_max is None else p_max
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not 0 <= p_max <= SERIES_ORDER_LIMIT:
        raise ValueError(f"p_max must lie in [0, {SERIES_ORDER_LIMIT}], got {p_max}")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    _check_arguments(xs)

    if cfg.mu == 0.0:
        return np.atleast_1d(cf_value_iid(xs, cfg)), CfTruncation(p_max=0, tail_bound=0.0, tol=tol)
    if np.all(xs == 0.0):
        return np.ones_like(xs), CfTruncation(p_max=0, tail_bound=0.0, tol=tol)
    # при K = N (в том числе N = 1) есть замкнутая форма при любом mu
    if cfg.K == cfg.N:
        return np.atleast_1d(cf_value_full_mrc(xs, cfg)), CfTruncation(p_max=0, tail_bound=0.0, tol=tol)

    x_abs = float(np.min(np.abs(xs)))
    target = tol
    while True:
        order = order_for_tolerance(x_abs, cfg, target, p_max)
        if order is None:
            terms = series_terms(xs, cfg, p_max)
            partial = _column_sums(terms)
            truncation = CfTruncation(p_max=p_max, tail_bound=tail_bound(x_abs, cfg, p_max), tol=target)
            raise CfTruncationError(
                f"c.f. series needs more than p_max={p_max} terms for tol={target:.3e} "
                f"(N={cfg.N}, K={cfg.K}, mu={cfg.mu:.6f}, |x|={x_abs:.3e})",
                partial_value=float(partial[0]) if partial.size == 1 else partial,
                truncation=truncation,
            )
        terms = series_terms(xs, cfg, order)
        values = _column_sums(terms)
        effective = min(tol, rel_tol * float(values.min()))
        if effective >= target or order_for_tolerance(x_abs, cfg, effective, order) is not None:
            truncation = CfTruncation(p_max=order, tail_bound=tail_bound(x_abs, cfg, order), tol=effective)
            logger.debug(f"c.f. series truncated at p={order}, tail bound {truncation.tail_bound:.3e}")
            return values, truncation
        target = effective


def cf_value(x: float, cfg: FasConfig, tol: Optional[float] = None, rel_tol: Optional[float] = None,
             p_max: Optional[int] = None) -> Tuple[float, CfTruncation]:
    """Ψ(x) для x <= 0 с контролем усечения ряда"""
    values, truncation = cf_values([x], cfg, tol=tol, rel_tol=rel_tol, p_max=p_max)
    return float(values[0]), truncation


# Представление через общий фактор: при фиксированном |x0|^2 порты независимы (Райс)

def _decay_rate(s: np.ndarray, cfg: FasConfig) -> np.ndarray:
    # скорость убывания best-K преобразования по lambda
    return s * cfg.K * cfg.N / (cfg.N + s * cfg.K)


def ncx2_log_probability(x, nc, upper: bool = False) -> np.ndarray:
    """log CDF (или log SF при upper) хи-квадрат с 2 степенями свободы и параметром nc"""
    x, nc = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(nc, dtype=float))
    # сбои scipy сосредоточены при больших nc, сортировка собирает их в один блок
    order = np.argsort(nc, axis=None, kind='stable')
    flat_x, flat_nc = x.ravel()[order], nc.ravel()[order]
    out = np.empty(flat_x.size)
    method = stats.ncx2.logsf if upper else stats.ncx2.logcdf
    pending = [(0, flat_x.size)]
    while pending:
        start, stop = pending.pop()
        part = slice(start, stop)
        try:
            with np.errstate(all='ignore'):
                values = np.asarray(method(flat_x[part], 2, flat_nc[part]), dtype=float)
            if not np.any(np.isnan(values) | (values == np.inf)):
                out[part] = np.minimum(values, 0.0)
                continue
        except (OverflowError, FloatingPointError) as e:
            logger.debug(f"ncx2 failed on {stop - start} points: {e}")
        if stop - start <= _MARCUM_BLOCK:
            log_cdf, log_sf = marcum_q1_log_pair(np.sqrt(flat_nc[part]), np.sqrt(flat_x[part]))
            out[part] = log_sf if upper else log_cdf
        else:
            middle = (start + stop) // 2
            pending.extend([(start, middle), (middle, stop)])
    result = np.empty_like(out)
    result[order] = out
    return result.reshape(x.shape)


def _scaled_best_k_transform(s: np.ndarray, lam: np.ndarray, cfg: FasConfig) -> np.ndarray:
    """exp(rate * lambda) * E[exp(-s * сумма K лучших)] для независимых портов Райса"""
    N, K = cfg.N, cfg.K
    if K == N:
        return np.broadcast_to((1.0 + s) ** (-N), lam.shape).copy()

    # последняя ось - узлы по t
    s = s[..., None]
    lam = lam[..., None]
    sqrt_lam = np.sqrt(lam)
    one_plus_s = 1.0 + s
    rate = _decay_rate(s, cfg)
    center = sqrt_lam * N / (N + s * K)
    width = 1.0 / np.sqrt(one_plus_s)
    log_coef = math.lgamma(N + 1) - math.lgamma(K) - math.lgamma(N - K + 1)

    def log_integrand(t: np.ndarray) -> np.ndarray:
        u = center + t * width
        valid = u > 0
        u = np.where(valid, u, 1.0)
        y = u * u
        with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
            log_value = (
                np.log(2.0 * u * width) - (u - sqrt_lam) ** 2 - s * y
                + np.log(special.i0e(2.0 * u * sqrt_lam)) + rate * lam + log_coef
            )
            if N > K:
                log_value = log_value + (N - K) * ncx2_log_probability(2.0 * y, 2.0 * lam)
            if K > 1:
                log_value = log_value + (K - 1) * (
                    -lam * s / one_plus_s - np.log(one_plus_s)
                    + ncx2_log_probability(2.0 * one_plus_s * y, 2.0 * lam / one_plus_s, upper=True)
                )
        return np.where(valid & ~np.isnan(log_value), log_value, -np.inf)

    # грубый проход по сетке находит носитель, затем Гаусс-Лежандр на нем
    low = np.maximum(-center / width, -_INNER_SPAN)
    t_scan = low + (_INNER_SPAN - low) * np.linspace(0.0, 1.0, _SCAN_POINTS)
    log_scan = log_integrand(t_scan)
    peak = log_scan.max(axis=-1, keepdims=True)
    index = np.arange(_SCAN_POINTS)
    significant = log_scan >= peak - _LOG_CUTOFF
    first = np.maximum(np.where(significant, index, _SCAN_POINTS).min(axis=-1, keepdims=True) - 1, 0)
    last = np.minimum(np.where(significant, index, -1).max(axis=-1, keepdims=True) + 1, _SCAN_POINTS - 1)
    left = np.take_along_axis(t_scan, first, axis=-1)
    half = 0.5 * (np.take_along_axis(t_scan, last, axis=-1) - left)

    nodes, weights = special.roots_legendre(_INNER_NODES)
    log_fine = log_integrand(left + half * (nodes + 1.0))
    result = (np.exp(log_fine) * weights).sum(axis=-1) * half[..., 0]
    return np.where(np.isfinite(peak[..., 0]), result, 0.0)


def cf_values_conditional(xs, cfg: FasConfig, nodes: int = _LAGUERRE_NODES) -> np.ndarray:
    """Ψ через усреднение по мощности общего фактора (квадратура Гаусса-Лагерра)"""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    _check_arguments(xs)
    if cfg.mu == 0.0:
        return np.atleast_1d(cf_value_iid(xs, cfg))

    mu2 = cfg.mu ** 2
    kappa = mu2 / (1.0 - mu2)
    s = -xs * cfg.gamma_av * (1.0 - mu2)
    alpha = kappa * _decay_rate(s, cfg)
    t, w = special.roots_laguerre(nodes)
    r = t[None, :] / (1.0 + alpha[:, None])
    lam = kappa * r
    s_grid = np.broadcast_to(s[:, None], lam.shape)
    scaled = _scaled_best_k_transform(s_grid, lam, cfg)
    return (scaled * w[None, :]).sum(axis=1) / (1.0 + alpha)


def cf_value_conditional(x: float, cfg: FasConfig) -> float:
    return float(cf_values_conditional([x], cfg)[0])
