"""
Вероятность ошибки на символ: точная формула через разложение на простейшие дроби,
квадратура интеграла Крейга и асимптотика при высоком SNR
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import mpmath
import numpy as np
from scipy import integrate, special

from cf_engine import (
    CfTruncation, CfTruncationError, FasConfig, cf_value, cf_values_conditional, order_for_tolerance,
    series_constants, tail_bound, term_bound,
)
from compositions import EtaSignature, signature_count, signature_weights
from modem import ModulationScheme, SchemeKind
from settings import settings
from specfun import incomplete_beta_half, sin_power_integral
from utils import SimpleCache

logger = logging.getLogger(__name__)

# предел числа сигнатур, при котором точная формула еще практична
SIGNATURE_LIMIT = 20000
_QUAD_LIMIT = 400
_LEGENDRE_ORDERS = (32, 48)

_ALPHA_CACHE = SimpleCache(max_size=4096)
_KERNEL_CACHE = SimpleCache(max_size=1024)
_F_CACHE = SimpleCache(max_size=200000)
_CHECK_CACHE = SimpleCache(max_size=1024)
# s = 1/sin^2(theta) >= 1 на интервале интегрирования
_CHECK_POINTS = (0.0, 1.0, 2.0, 10.0, 100.0)


class SepMethod(str, Enum):
    CLOSED_FORM = 'closed_form'
    QUADRATURE = 'quadrature'
    ASYMPTOTIC = 'asymptotic'
    MONTE_CARLO = 'monte_carlo'


class QuadratureError(RuntimeError):
    """Квадратура не достигла требуемой точности"""

    def __init__(self, message: str, value: float, error: float):
        super().__init__(message)
        self.value = value
        self.error = error


class ClosedFormUnavailable(RuntimeError):
    """Точная формула вне практических пределов (N или число сигнатур)"""


@dataclass(frozen=True)
class IntegralSpec:
    c: float
    Theta: float
    cfg: FasConfig

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not 0.0 < self.Theta < math.pi:
            raise ValueError(f"Theta must lie in (0, pi), got {self.Theta}")

    @property
    def x_abs_min(self) -> float:
        """Наименьший |x| = c / sin^2(theta) на интервале интегрирования"""
        return self.c / math.sin(min(self.Theta, math.pi / 2)) ** 2


@dataclass(frozen=True)
class SepResult:
    value: float
    method: SepMethod
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"SEP value {self.value} outside [0, 1]")

    def describe(self) -> str:
        """Диагностика одной строкой для CSV"""
        parts = []
        for key, value in self.diagnostics.items():
            if isinstance(value, float):
                parts.append(f"{key}={value:.3e}")
            else:
                parts.append(f"{key}={value}")
        return ';'.join(parts)


@dataclass(frozen=True)
class PartialFractionCoeffs:
    """alpha[k][n-1] при (1 + b_k s)^(-n) и полюса c_k = 1 / b_k"""
    alpha: Tuple[Tuple[Any, ...], ...]
    poles: Tuple[Any, ...]
    eta: Tuple[int, ...]

    def reconstruct(self, s: float):
        total = mpmath.mpf(0)
        for alpha_k, pole in zip(self.alpha, self.poles):
            base = 1 + mpmath.mpf(s) / pole
            for n, coeff in enumerate(alpha_k, start=1):
                total += coeff / base ** n
        return total

    def original(self, s: float):
        value = mpmath.mpf(1)
        for eta_k, pole in zip(self.eta, self.poles):
            value /= (1 + mpmath.mpf(s) / pole) ** eta_k
        return value

    def check(self, points: Sequence[float], rel_tol: float = 1e-8) -> bool:
        """Сверка разложения с исходной дробью в заданных точках s >= 0"""
        for s in points:
            expected = self.original(s)
            if abs(self.reconstruct(s) - expected) > rel_tol * abs(expected):
                return False
        return True


# Разложение на простейшие дроби

def _alpha_table(K: int, eta: Tuple[int, ...]) -> Tuple[Tuple[Any, ...], ...]:
    # коэффициенты exp(sum_q x_q w^q) по рекурсии E_m = (1/m) sum_q q x_q E_{m-q}
    n_tilde = len(eta)
    table = []
    for k in range(1, n_tilde + 1):
        others = [p for p in range(1, n_tilde + 1) if p != k]
        const = mpmath.mpf(1)
        for p in others:
            const *= (mpmath.mpf(K + p - 1) / (p - k)) ** eta[p - 1]
        ratios = [(mpmath.mpf(K + k - 1) / (k - p), eta[p - 1]) for p in others]
        depth = eta[k - 1] - 1
        x = [mpmath.mpf(0)] * (depth + 1)
        for q in range(1, depth + 1):
            x[q] = mpmath.fsum(e * r ** q for r, e in ratios) / q
        coeffs = [mpmath.mpf(1)] + [mpmath.mpf(0)] * depth
        for m in range(1, depth + 1):
            coeffs[m] = mpmath.fsum(q * x[q] * coeffs[m - q] for q in range(1, m + 1)) / m
        table.append(tuple(const * coeffs[eta[k - 1] - n] for n in range(1, eta[k - 1] + 1)))
    return tuple(table)


def pole_scales(spec: IntegralSpec) -> Tuple[float, ...]:
    """b_k = c (1-mu^2) K Gamma / (K+k-1), k = 1..N-K+1"""
    cfg = spec.cfg
    scale = spec.c * (1.0 - cfg.mu ** 2) * cfg.K * cfg.gamma_av
    return tuple(scale / (cfg.K + k - 1) for k in range(1, cfg.n_tilde + 1))


def pole_values(spec: IntegralSpec) -> Tuple[Any, ...]:
    """c_k = (K+k-1) / (c (1-mu^2) K Gamma) в текущей точности mpmath"""
    cfg = spec.cfg
    scale = mpmath.mpf(spec.c) * (1 - mpmath.mpf(cfg.mu) ** 2) * cfg.K * mpmath.mpf(cfg.gamma_av)
    # отношения c_p / c_k должны быть точными, как в рекурсии для alpha
    return tuple(mpmath.mpf(cfg.K + k - 1) / scale for k in range(1, cfg.n_tilde + 1))


def partial_fraction_coeffs(signature: EtaSignature, spec: IntegralSpec) -> PartialFractionCoeffs:
    alpha = _ALPHA_CACHE.get_or_compute(
        (signature.K, signature.eta, mpmath.mp.dps),
        lambda: _alpha_table(signature.K, signature.eta),
    )
    return PartialFractionCoeffs(alpha=alpha, poles=pole_values(spec), eta=signature.eta)


def _check_signatures(cfg: FasConfig, order: int) -> List[EtaSignature]:
    # вся кратность на первом полюсе и равномерно по всем полюсам
    n_tilde = cfg.n_tilde
    share, rest = divmod(order, n_tilde)
    spread = (cfg.K + share + rest,) + (1 + share,) * (n_tilde - 1)
    return [EtaSignature(eta=(cfg.K + order,) + (1,) * (n_tilde - 1), K=cfg.K),
            EtaSignature(eta=spread, K=cfg.K)]


def verify_partial_fractions(spec: IntegralSpec, order: int) -> bool:
    """Сверка разложения на простейшие дроби один раз на конфигурацию"""
    cfg = spec.cfg
    key = (cfg.N, cfg.K, spec.c, cfg.gamma_av, cfg.mu, order, mpmath.mp.dps)

    def compute():
        return all(partial_fraction_coeffs(signature, spec).check(_CHECK_POINTS)
                   for signature in _check_signatures(cfg, order))

    return _CHECK_CACHE.get_or_compute(key, compute)


# Ядра G и H

def _craig_power_integrals(c_k: float, theta: float, depth: int) -> List[Any]:
    """H_i = (1/pi) int_0^theta (1 + c_k sin^2 t)^(-i) dt, i = 1..depth"""
    c = mpmath.mpf(c_k)
    root = mpmath.sqrt(1 + c)
    pi = mpmath.pi
    at_right_angle = abs(theta - math.pi / 2) < 1e-15
    if at_right_angle:
        tangent = None
        base = pi / 2
    else:
        tangent = mpmath.tan(mpmath.mpf(theta))
        if theta < math.pi / 2:
            base = mpmath.atan(root * tangent)
        else:
            base = pi - mpmath.atan(root * abs(tangent))

    # скобка для l = 0..depth-1: base + sqrt(1+c) tan/2 * sum_{p<=l} 4^p / (C(2p,p) p (1+(1+c) tan^2)^p)
    brackets = []
    partial = mpmath.mpf(0)
    for l in range(depth):
        if l > 0 and tangent is not None:
            partial += mpmath.mpf(4) ** l / (mpmath.binomial(2 * l, l) * l * (1 + (1 + c) * tangent ** 2) ** l)
        if tangent is None:
            brackets.append(base)
        else:
            brackets.append(base + root * tangent / 2 * partial)

    values = []
    for i in range(1, depth + 1):
        total = mpmath.fsum(
            mpmath.binomial(i - 1, l) * mpmath.binomial(2 * l, l) * (c / 4) ** l * brackets[l]
            for l in range(i)
        )
        values.append(total / (pi * (1 + c) ** (i - mpmath.mpf(1) / 2)))
    return values


def _kernel_table(c_k: float, theta: float, depth: int) -> Tuple[Any, ...]:
    """G_n = theta/pi + sum_i (-1)^i C(n,i) H_i, n = 1..depth"""

    def compute():
        h = _craig_power_integrals(c_k, theta, depth)
        head = mpmath.mpf(theta) / mpmath.pi
        return tuple(
            head + mpmath.fsum((-1) ** i * mpmath.binomial(n, i) * h[i - 1] for i in range(1, n + 1))
            for n in range(1, depth + 1)
        )

    return _KERNEL_CACHE.get_or_compute((c_k, theta, depth, mpmath.mp.dps), compute)


def _working_digits(spec: IntegralSpec, order: int) -> int:
    cfg = spec.cfg
    total_multiplicity = cfg.N + order
    b_max = max(pole_scales(spec))
    lost = total_multiplicity * (math.log10(2.0 + b_max) + math.log10(cfg.N + 1.0) + 1.0)
    return settings.mp_dps + int(math.ceil(lost))


def craig_pole_integral(signature: EtaSignature, spec: IntegralSpec) -> float:
    """F = (1/pi) int_0^Theta prod_k (sin^2 / (sin^2 + b_k))^eta_k dtheta"""
    cfg = spec.cfg
    key = (signature.eta, signature.K, spec.c, spec.Theta, cfg.gamma_av, cfg.mu)

    def compute():
        coeffs = partial_fraction_coeffs(signature, spec)
        total = []
        for alpha_k, pole, eta_k in zip(coeffs.alpha, coeffs.poles, signature.eta):
            kernels = _kernel_table(pole, spec.Theta, eta_k)
            total.extend(a * g for a, g in zip(alpha_k, kernels))
        return float(mpmath.fsum(total))

    return _F_CACHE.get_or_compute(key, compute)


def closed_form_order(spec: IntegralSpec) -> int:
    """Порядок ряда, нужный точной формуле; исключение, если точка вне ее пределов"""
    cfg = spec.cfg
    if cfg.N > settings.n_max:
        raise ClosedFormUnavailable(f"closed form limited to N <= {settings.n_max}, got N={cfg.N}")
    share = spec.Theta / math.pi
    x_abs = spec.x_abs_min

    # порядок, нужный хотя бы для абсолютного допуска, известен заранее
    needed = order_for_tolerance(x_abs, cfg, settings.tol / share, settings.p_max)
    if needed is None:
        truncation = CfTruncation(p_max=settings.p_max,
                                  tail_bound=share * tail_bound(x_abs, cfg, settings.p_max), tol=settings.tol)
        raise CfTruncationError(
            f"closed-form series needs more than p_max={settings.p_max} terms "
            f"(N={cfg.N}, K={cfg.K}, mu={cfg.mu:.6f}, |x|>={x_abs:.3e})",
            partial_value=float("nan"), truncation=truncation,
        )
    if math.comb(needed + cfg.n_tilde, cfg.n_tilde) > SIGNATURE_LIMIT:
        raise ClosedFormUnavailable(
            f"closed form needs more than {SIGNATURE_LIMIT} signatures up to p={needed} "
            f"(N={cfg.N}, K={cfg.K}, mu={cfg.mu:.6f})"
        )
    return needed


def integral_J(spec: IntegralSpec) -> SepResult:
    """J(c, Theta; Gamma) через сумму по η-сигнатурам и простейшие дроби"""
    cfg = spec.cfg
    needed = closed_form_order(spec)
    pref, ratio, _ = series_constants(cfg)
    share = spec.Theta / math.pi
    x_abs = spec.x_abs_min

    with mpmath.workdps(_working_digits(spec, needed)):
        reconstructs = verify_partial_fractions(spec, needed)
    if not reconstructs:
        raise ClosedFormUnavailable(
            f"partial-fraction expansion does not reproduce the integrand at p={needed} "
            f"(N={cfg.N}, K={cfg.K}, mu={cfg.mu:.6f})"
        )

    terms: List[float] = []
    signatures_used = 0

    for order in range(settings.p_max + 1):
        signatures_used += signature_count(order, cfg.N, cfg.K)
        if signatures_used > SIGNATURE_LIMIT:
            raise ClosedFormUnavailable(
                f"closed form needs more than {SIGNATURE_LIMIT} signatures at p={order} "
                f"(N={cfg.N}, K={cfg.K}, mu={cfg.mu:.6f})"
            )
        weights = signature_weights(order, cfg.N, cfg.K)
        with mpmath.workdps(_working_digits(spec, order)):
            contributions = [
                weight * craig_pole_integral(EtaSignature.from_key(key, cfg.K), spec)
                for key, weight in weights.items()
            ]
        terms.append(pref * ratio ** order * math.fsum(contributions))

        value = math.fsum(terms)
        target = min(settings.tol, settings.rel_tol * value)
        bound = share * tail_bound(x_abs, cfg, order)
        if bound <= target and share * term_bound(x_abs, cfg, order) < target / 10:
            truncation = CfTruncation(p_max=order, tail_bound=bound, tol=target)
            logger.debug(f"Closed-form J(c={spec.c:.4g}, Theta={spec.Theta:.4g}) truncated at p={order}")
            return SepResult(
                value=min(max(value, 0.0), 1.0),
                method=SepMethod.CLOSED_FORM,
                diagnostics={'path': 'closed_form', 'p': truncation.p_max, 'tail': truncation.tail_bound},
            )

    truncation = CfTruncation(p_max=settings.p_max, tail_bound=share * tail_bound(x_abs, cfg, settings.p_max),
                              tol=settings.tol)
    raise CfTruncationError(
        f"closed-form series did not converge within p_max={settings.p_max}",
        partial_value=math.fsum(terms), truncation=truncation,
    )


def _craig_integrand(theta: float, spec: IntegralSpec) -> float:
    sine = math.sin(theta)
    if sine == 0.0:
        return 0.0
    value, _ = cf_value(-spec.c / (sine * sine), spec.cfg)
    return value


def integral_J_quadrature(spec: IntegralSpec) -> SepResult:
    """J(c, Theta; Gamma) адаптивной квадратурой по theta с рядом для Ψ"""
    rough, _ = integrate.quad(_craig_integrand, 0.0, spec.Theta, args=(spec,),
                              epsabs=1e-11, epsrel=1e-8, limit=_QUAD_LIMIT)
    # абсолютная цель 1e-11, при малых J еще и относительная
    target = min(1e-11, settings.rel_tol * rough / math.pi) if rough > 0 else 1e-11
    value, error, info = integrate.quad(_craig_integrand, 0.0, spec.Theta, args=(spec,),
                                        epsabs=target * math.pi, epsrel=1e-14, limit=_QUAD_LIMIT,
                                        full_output=1)[:3]
    value /= math.pi
    error /= math.pi
    if error > 10 * target:
        raise QuadratureError(
            f"quadrature of J(c={spec.c:.4g}, Theta={spec.Theta:.4g}) stopped with error {error:.3e} "
            f"after {info['neval']} evaluations", value=value, error=error,
        )
    return SepResult(value=min(max(value, 0.0), 1.0), method=SepMethod.QUADRATURE,
                     diagnostics={'path': 'quad_series', 'abserr': error})


def integral_J_conditional(spec: IntegralSpec) -> SepResult:
    """J через Ψ по условному представлению и правило Гаусса-Лежандра по theta"""
    rules = []
    for order in _LEGENDRE_ORDERS:
        nodes, weights = special.roots_legendre(order)
        theta = 0.5 * spec.Theta * (nodes + 1.0)
        rules.append((theta, 0.5 * spec.Theta * weights))
    theta_all = np.concatenate([theta for theta, _ in rules])
    psi = cf_values_conditional(-spec.c / np.sin(theta_all) ** 2, spec.cfg)

    estimates = []
    offset = 0
    for theta, weights in rules:
        estimates.append(float(np.dot(weights, psi[offset:offset + theta.size])) / math.pi)
        offset += theta.size
    value = estimates[-1]
    error = abs(estimates[-1] - estimates[0])
    if error > max(1e-12, 1e-6 * abs(value)):
        raise QuadratureError(
            f"Gauss-Legendre rules disagree by {error:.3e} for J(c={spec.c:.4g}, Theta={spec.Theta:.4g})",
            value=value, error=error,
        )
    return SepResult(value=min(max(value, 0.0), 1.0), method=SepMethod.QUADRATURE,
                     diagnostics={'path': 'quad_conditional', 'abserr': error})


def evaluate_J(spec: IntegralSpec, method: str = 'exact') -> SepResult:
    """J с цепочкой отката: точная формула -> квадратура с рядом -> квадратура с условной Ψ"""
    if method == 'exact':
        try:
            return integral_J(spec)
        except (CfTruncationError, ClosedFormUnavailable) as e:
            logger.warning(f"Closed form unavailable, falling back to quadrature: {e}")
    elif method != 'quad':
        raise ValueError(f"method must be 'exact' or 'quad', got {method!r}")
    try:
        return integral_J_quadrature(spec)
    except (CfTruncationError, QuadratureError) as e:
        logger.warning(f"Series c.f. quadrature unavailable, using conditional c.f.: {e}")
    return integral_J_conditional(spec)


# Формулы SEP через интегралы Крейга

def craig_terms(scheme: ModulationScheme) -> List[Tuple[float, float, float]]:
    """SEP = sum weight * J(c, Theta): список (weight, c, Theta)"""
    M = scheme.M
    if scheme.kind is SchemeKind.ASK:
        return [(2.0 * (M - 1) / M, 3.0 / (M * M - 1), math.pi / 2)]
    if scheme.kind is SchemeKind.PSK:
        return [(1.0, math.sin(math.pi / M) ** 2, math.pi * (M - 1) / M)]
    if scheme.kind is SchemeKind.QAM:
        edge = 1.0 - 1.0 / math.sqrt(M)
        c = 3.0 / (2.0 * (M - 1))
        return [(4.0 * edge, c, math.pi / 2), (-4.0 * edge * edge, c, math.pi / 4)]
    return [(1.0, 0.5, math.pi / 2)]


def _combine(scheme: ModulationScheme, cfg: FasConfig, method: str) -> SepResult:
    parts = [(weight, evaluate_J(IntegralSpec(c=c, Theta=theta, cfg=cfg), method))
             for weight, c, theta in craig_terms(scheme)]
    value = math.fsum(weight * part.value for weight, part in parts)
    methods = {part.method for _, part in parts}
    paths = sorted({part.diagnostics.get('path', '') for _, part in parts})
    diagnostics: Dict[str, Any] = {'path': '+'.join(paths)}
    if SepMethod.CLOSED_FORM in methods and len(methods) == 1:
        diagnostics['p'] = max(part.diagnostics['p'] for _, part in parts)
        diagnostics['tail'] = max(part.diagnostics['tail'] for _, part in parts)
    else:
        diagnostics['abserr'] = sum(abs(weight) * part.diagnostics.get('abserr', 0.0) for weight, part in parts)
    method_used = SepMethod.CLOSED_FORM if methods == {SepMethod.CLOSED_FORM} else SepMethod.QUADRATURE
    return SepResult(value=min(max(value, 0.0), 1.0), method=method_used, diagnostics=diagnostics)


def sep_ask(M: int, cfg: FasConfig, method: str = 'exact') -> SepResult:
    return _combine(ModulationScheme(SchemeKind.ASK, M), cfg, method)


def sep_psk(M: int, cfg: FasConfig, method: str = 'exact') -> SepResult:
    return _combine(ModulationScheme(SchemeKind.PSK, M), cfg, method)


def sep_qam(M: int, cfg: FasConfig, method: str = 'exact') -> SepResult:
    return _combine(ModulationScheme(SchemeKind.QAM, M), cfg, method)


def sep_bfsk(cfg: FasConfig, method: str = 'exact') -> SepResult:
    return _combine(ModulationScheme(SchemeKind.BFSK, 2), cfg, method)


# Асимптотика при высоком SNR

def calK(cfg: FasConfig) -> float:
    """(1 + (N-1) mu^2) (K-1)! K^(N-K+1) (1 - mu^2)^(N-1)"""
    mu2 = cfg.mu ** 2
    return ((1.0 + (cfg.N - 1) * mu2) * math.factorial(cfg.K - 1) * cfg.K ** cfg.n_tilde
            * (1.0 - mu2) ** (cfg.N - 1))


def integral_J_asymptotic(c: float, Theta: float, cfg: FasConfig) -> float:
    N = cfg.N
    return (math.factorial(N) * sin_power_integral(N, Theta)
            / (math.pi * calK(cfg) * c ** N * cfg.gamma_av ** N))


def sep_asymptotic(scheme: ModulationScheme, cfg: FasConfig) -> SepResult:
    """Асимптотические выражения SEP (порядок разнесения N)"""
    N, M = cfg.N, scheme.M
    scale = calK(cfg) * cfg.gamma_av ** N
    if scheme.kind is SchemeKind.ASK:
        value = ((M - 1) ** (N + 1) * (M + 1) ** N * math.factorial(2 * N)
                 / (4 ** N * 3 ** N * M * math.factorial(N) * scale))
    elif scheme.kind is SchemeKind.PSK:
        value = (math.factorial(N) * sin_power_integral(N, math.pi * (M - 1) / M)
                 / (math.pi * math.sin(math.pi / M) ** (2 * N) * scale))
    elif scheme.kind is SchemeKind.QAM:
        edge = 1.0 - 1.0 / math.sqrt(M)
        bracket = (math.pi * math.factorial(2 * N) / (4 ** N * math.factorial(N) ** 2)
                   - edge * incomplete_beta_half(N + 0.5, 0.5))
        value = edge * 2 ** (N + 1) * (M - 1) ** N * math.factorial(N) / (math.pi * 3 ** N * scale) * bracket
    else:
        value = math.factorial(2 * N) / (2 ** (N + 1) * math.factorial(N) * scale)
    return SepResult(value=min(max(value, 0.0), 1.0), method=SepMethod.ASYMPTOTIC,
                     diagnostics={'calK': calK(cfg)})


def sep(scheme: ModulationScheme, cfg: FasConfig, method: str = 'exact') -> SepResult:
    """Диспетчер: exact (точная формула с откатом), quad (квадратура), asym (асимптотика)"""
    if method == 'asym':
        return sep_asymptotic(scheme, cfg)
    if method not in ('exact', 'quad'):
        raise ValueError(f"method must be one of exact, quad, asym; got {method!r}")
    return _combine(scheme, cfg, method)


def fit_diversity_order(scheme: ModulationScheme, cfg: FasConfig, gammas: Sequence[float],
                        method: str = 'exact') -> float:
    """Наклон log10 SEP по log10 Gamma (МНК)"""
    gammas = [float(g) for g in gammas]
    if len(gammas) < 2:
        raise ValueError("at least two SNR points are needed to fit a slope")
    values = [sep(scheme, cfg.with_gamma(g), method).value for g in gammas]
    if min(values) <= 0.0:
        raise ValueError("SEP underflowed to zero; cannot fit a log-log slope")
    slope, _ = np.polyfit(np.log10(gammas), np.log10(values), 1)
    return float(slope)
