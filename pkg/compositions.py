"""
Перечисление индексов ряда характеристической функции и η-сигнатур полюсов
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, Iterator, Mapping, Sequence, Tuple

from specfun import multinomial
from utils import SimpleCache

logger = logging.getLogger(__name__)

# ключ сигнатуры: (q_1 + ... + q_K, q_{K+1}, ..., q_N)
SignatureKey = Tuple[int, ...]

_WEIGHT_CACHE = SimpleCache(max_size=512)


@dataclass(frozen=True)
class CompositionIndex:
    p: int
    l_vec: Tuple[int, ...]
    q_vec: Tuple[int, ...]

    def __post_init__(self):
        if len(self.l_vec) != len(self.q_vec):
            raise ValueError(f"l_vec and q_vec differ in length: {len(self.l_vec)} != {len(self.q_vec)}")
        if sum(self.l_vec) != self.p or sum(self.q_vec) != self.p:
            raise ValueError(f"l_vec {self.l_vec} and q_vec {self.q_vec} must both sum to p={self.p}")
        if min(self.l_vec + self.q_vec, default=0) < 0:
            raise ValueError("composition entries must be non-negative")
        slack = 0
        for l_k, q_k in zip(self.l_vec[:-1], self.q_vec[:-1]):
            slack += l_k - q_k
            if slack < 0:
                raise ValueError(f"prefix constraint violated by q_vec {self.q_vec} against l_vec {self.l_vec}")

    @property
    def weight(self) -> float:
        return term_weight(self.l_vec, self.q_vec)


@dataclass(frozen=True)
class EtaSignature:
    """Кратности полюсов: eta[0] = K + q_1 + ... + q_K, eta[k] = q_{K+k} + 1"""
    eta: Tuple[int, ...]
    K: int

    def __post_init__(self):
        if not self.eta:
            raise ValueError("eta signature must have at least one pole")
        if self.eta[0] < self.K or any(e < 1 for e in self.eta[1:]):
            raise ValueError(f"invalid eta signature {self.eta} for K={self.K}")

    @property
    def n_ports(self) -> int:
        return self.K + len(self.eta) - 1

    @property
    def order(self) -> int:
        """Порядок ряда p, которому принадлежит сигнатура"""
        return sum(self.eta) - self.n_ports

    @property
    def key(self) -> SignatureKey:
        return (self.eta[0] - self.K,) + tuple(e - 1 for e in self.eta[1:])

    @classmethod
    def from_key(cls, key: SignatureKey, K: int) -> "EtaSignature":
        return cls(eta=(key[0] + K,) + tuple(q + 1 for q in key[1:]), K=K)


def _check_sizes(p: int, N: int, K: int = 1) -> None:
    if p < 0:
        raise ValueError(f"series order p must be >= 0, got {p}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not 1 <= K <= N:
        raise ValueError(f"K must satisfy 1 <= K <= N={N}, got {K}")


def enumerate_l(p: int, N: int) -> Iterator[Tuple[int, ...]]:
    """Все слабые композиции p на N частей; первая часть убывает"""
    _check_sizes(p, N)
    if N == 1:
        yield (p,)
        return
    for first in range(p, -1, -1):
        for rest in enumerate_l(p - first, N - 1):
            yield (first,) + rest


def enumerate_q(l_vec: Sequence[int]) -> Iterator[Tuple[int, ...]]:
    """Все q с префиксными ограничениями sum q_i <= sum l_i и sum q = sum l"""
    l_vec = tuple(l_vec)
    if not l_vec or min(l_vec) < 0:
        raise ValueError(f"l_vec must be a non-empty weak composition, got {l_vec}")

    def walk(k: int, slack: int) -> Iterator[Tuple[int, ...]]:
        available = slack + l_vec[k]
        if k == len(l_vec) - 1:
            yield (available,)
            return
        for q_k in range(available + 1):
            for rest in walk(k + 1, available - q_k):
                yield (q_k,) + rest

    yield from walk(0, 0)


def eta_signature(q_vec: Sequence[int], K: int, N: int) -> EtaSignature:
    if len(q_vec) != N:
        raise ValueError(f"q_vec has {len(q_vec)} entries, expected N={N}")
    _check_sizes(sum(q_vec), N, K)
    return EtaSignature(eta=(K + sum(q_vec[:K]),) + tuple(q + 1 for q in q_vec[K:]), K=K)


def signature_key(q_vec: Sequence[int], K: int) -> SignatureKey:
    return (sum(q_vec[:K]),) + tuple(q_vec[K:])


def term_weight(l_vec: Sequence[int], q_vec: Sequence[int]) -> float:
    """Мультиномиальный вес пары (l, q) вместе с произведением k^(-q_k) C(l_k + d_{k-1}, l_k)"""
    p = sum(l_vec)
    weight = multinomial(p, l_vec)
    slack = 0
    for k, (l_k, q_k) in enumerate(zip(l_vec, q_vec), start=1):
        weight *= math.comb(l_k + slack, l_k) / k ** q_k
        slack += l_k - q_k
    return weight


def stream_signature_weights(p: int, N: int, K: int) -> Dict[SignatureKey, float]:
    """Прямой перебор пар (l, q) с накоплением веса по сигнатуре"""
    _check_sizes(p, N, K)
    weights: Dict[SignatureKey, float] = defaultdict(float)
    for l_vec in enumerate_l(p, N):
        for q_vec in enumerate_q(l_vec):
            weights[signature_key(q_vec, K)] += term_weight(l_vec, q_vec)
    return dict(sorted(weights.items()))


def _signature_weights_dp(p: int, N: int, K: int) -> Dict[SignatureKey, float]:
    # состояние после порта k: (L = sum l, d = L - sum q, префикс ключа)
    states: Dict[tuple, float] = {(0, 0, ()): 1.0}
    for k in range(1, N):
        advanced: Dict[tuple, float] = defaultdict(float)
        for (total, slack, prefix), w in states.items():
            for l_k in range(p - total + 1):
                base = w * math.comb(l_k + slack, l_k) / math.factorial(l_k)
                available = slack + l_k
                for q_k in range(available + 1):
                    remaining = available - q_k
                    if k < K:
                        key = prefix
                    elif k == K:
                        key = (total + l_k - remaining,)
                    else:
                        key = prefix + (q_k,)
                    advanced[(total + l_k, remaining, key)] += base / k ** q_k
        states = advanced

    # последний порт забирает остаток: l_N = p - L, q_N = d + l_N
    weights: Dict[SignatureKey, float] = defaultdict(float)
    scale = math.factorial(p)
    for (total, slack, prefix), w in states.items():
        l_last = p - total
        q_last = slack + l_last
        value = w * math.comb(l_last + slack, l_last) / math.factorial(l_last) / N ** q_last
        key = (p,) if K == N else prefix + (q_last,)
        weights[key] += scale * value
    return dict(sorted(weights.items()))


def signature_weights(p: int, N: int, K: int) -> Mapping[SignatureKey, float]:
    """Суммарный вес каждой η-сигнатуры порядка p (кэшируется по (p, N, K))"""
    _check_sizes(p, N, K)

    def compute():
        weights = _signature_weights_dp(p, N, K)
        logger.debug(f"Signature weights p={p} N={N} K={K}: {len(weights)} signatures")
        return MappingProxyType(weights)

    return _WEIGHT_CACHE.get_or_compute((p, N, K), compute)


def signature_count(p: int, N: int, K: int) -> int:
    """Число возможных ключей сигнатуры порядка p (верхняя оценка объема работы)"""
    _check_sizes(p, N, K)
    n_tilde = N - K + 1
    return math.comb(p + n_tilde - 1, n_tilde - 1)
