"""
Специальные функции и комбинаторные коэффициенты для формул SEP
"""

import math
from typing import Sequence, Tuple

import numpy as np
from scipy import special

# граница перехода степенного ряда 1F2 на интеграл от J0
HYP1F2_SERIES_LIMIT = 30.0
_HYP1F2_MAX_TERMS = 200
MARCUM_TERMS_LIMIT = 4000


def bessel_j0(x: float) -> float:
    """Функция Бесселя J0"""
    return float(special.j0(x))


def bessel_j1(x: float) -> float:
    """Функция Бесселя J1"""
    return float(special.j1(x))


def j1_over_x(x: float) -> float:
    """J1(x)/x без деления 0/0 в нуле"""
    if abs(x) < 1e-6:
        # J1(x)/x = 1/2 - x^2/16 + O(x^4)
        return 0.5 - x * x / 16.0
    return bessel_j1(x) / x


def hyp1f2_half_series(x: float) -> float:
    """Степенной ряд 1F2(1/2; 1; 3/2; x) = sum x^n / ((2n+1) (n!)^2)"""
    total = 1.0
    term = 1.0
    for n in range(1, _HYP1F2_MAX_TERMS):
        # отношение соседних коэффициентов x^n / ((2n+1) n!^2)
        term *= x / (n * n)
        contribution = term / (2 * n + 1)
        total += contribution
        if abs(contribution) < 1e-17 * abs(total) and n > abs(x):
            break
    return total


def hyp1f2_half_integral(x: float) -> float:
    """1F2(1/2; 1; 3/2; -a^2) = (1/(2a)) * int_0^{2a} J0(t) dt"""
    if x == 0.0:
        return 1.0
    b = 2.0 * math.sqrt(-x)
    int_j0, _ = special.itj0y0(b)
    return float(int_j0) / b


def hyp1f2_half(x: float) -> float:
    """1F2(1/2; 1; 3/2; x) для x <= 0"""
    if x > 0:
        raise ValueError(f"hyp1f2_half is defined here for x <= 0 only, got x={x}")
    if -x <= HYP1F2_SERIES_LIMIT:
        return hyp1f2_half_series(x)
    return hyp1f2_half_integral(x)


def gaussian_q(x: float) -> float:
    """Гауссова Q-функция"""
    return float(0.5 * special.erfc(x / math.sqrt(2.0)))


def marcum_q1_log_pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    """(log(1 - Q1(a, b)), log Q1(a, b)) рядом по I_k(ab) без переполнения"""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    lower = b <= a
    larger = np.maximum(a, b)
    ratio = np.where(larger > 0, np.minimum(a, b) / np.where(larger > 0, larger, 1.0), 0.0)
    z = a * b
    with np.errstate(divide='ignore'):
        geometric = np.where(ratio < 1.0, 40.0 / -np.log(np.where(ratio < 1.0, ratio, 0.5)), np.inf)
    needed = np.minimum(geometric, np.sqrt(80.0 * z) + 10.0)
    terms = int(min(max(np.max(needed, initial=0.0) + 2.0, 8.0), MARCUM_TERMS_LIMIT))
    k = np.arange(terms)
    series = ratio[..., None] ** k * special.ive(k, z[..., None])
    # для нижнего хвоста сумма начинается с k = 1
    series[..., 0] = np.where(lower, 0.0, series[..., 0])
    with np.errstate(divide='ignore'):
        near = -0.5 * (a - b) ** 2 + np.log(series.sum(axis=-1))
        far = np.log1p(-np.exp(near))
    return np.where(lower, near, far), np.where(lower, far, near)


def lower_incomplete_beta(a: float, b: float, x: float) -> float:
    """Неполная бета-функция int_0^x t^(a-1) (1-t)^(b-1) dt"""
    if a <= 0 or b <= 0:
        raise ValueError(f"incomplete beta needs a > 0 and b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"incomplete beta upper limit must lie in [0, 1], got {x}")
    return float(special.betainc(a, b, x) * special.beta(a, b))


def incomplete_beta_half(a: float, b: float) -> float:
    """B_{1/2}(a, b): неполная бета-функция с верхним пределом 1/2"""
    return lower_incomplete_beta(a, b, 0.5)


def sin_power_integral(n: int, theta: float) -> float:
    """Замкнутая форма int_0^theta sin^(2n) t dt"""
    if n < 1:
        raise ValueError(f"sin_power_integral needs n >= 1, got {n}")
    if not 0.0 <= theta <= math.pi:
        raise ValueError(f"sin_power_integral needs theta in [0, pi], got {theta}")
    head = theta * math.comb(2 * n, n) / 4 ** n
    tail = 0.0
    for j in range(n):
        k = 2 * n - 2 * j
        tail += (-1) ** j * math.comb(2 * n, j) * math.sin(k * theta) / k
    return head + (-1) ** n * tail / 2 ** (2 * n - 1)


# Комбинаторика

def log_factorial(n: int) -> float:
    if n < 0:
        raise ValueError(f"factorial of a negative number: {n}")
    return float(special.gammaln(n + 1))


def binomial(n: int, k: int) -> float:
    """Биномиальный коэффициент; за пределами 170! считается через логарифмы"""
    if n < 0 or k < 0:
        raise ValueError(f"binomial needs non-negative arguments, got ({n}, {k})")
    if k > n:
        return 0.0
    if n <= 170:
        return float(math.comb(n, k))
    return math.exp(log_factorial(n) - log_factorial(k) - log_factorial(n - k))


def multinomial(p: int, parts: Sequence[int]) -> float:
    """Мультиномиальный коэффициент p! / prod(l_k!)"""
    if any(part < 0 for part in parts):
        raise ValueError(f"multinomial parts must be non-negative, got {list(parts)}")
    if sum(parts) != p:
        raise ValueError(f"multinomial parts {list(parts)} do not sum to {p}")
    if p <= 170:
        exact = math.factorial(p)
        for part in parts:
            exact //= math.factorial(part)
        return float(exact)
    log_value = log_factorial(p) - sum(log_factorial(part) for part in parts)
    return math.exp(log_value)
