"""
Созвездия ASK/PSK/QAM/BFSK и ML-детекторы после MRC-комбинирования
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[complex, float, np.ndarray]


class SchemeKind(str, Enum):
    ASK = 'ask'
    PSK = 'psk'
    QAM = 'qam'
    BFSK = 'bfsk'


@dataclass(frozen=True)
class ModulationScheme:
    kind: SchemeKind
    M: int

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"modulation order M must be >= 2, got {self.M}")
        if self.kind is SchemeKind.QAM:
            root = math.isqrt(self.M)
            if root * root != self.M or self.M < 4:
                raise ValueError(f"QAM order must be a perfect square >= 4, got {self.M}")
        if self.kind is SchemeKind.BFSK and self.M != 2:
            raise ValueError(f"BFSK order is fixed at 2, got {self.M}")

    @classmethod
    def parse(cls, name: str, M: int = 2) -> "ModulationScheme":
        """Схема по имени (ask/psk/qam/bfsk); для BFSK порядок всегда 2"""
        try:
            kind = SchemeKind(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown modulation {name!r}; expected one of ask, psk, qam, bfsk")
        return cls(kind, 2 if kind is SchemeKind.BFSK else M)

    @property
    def label(self) -> str:
        if self.kind is SchemeKind.BFSK:
            return 'BFSK'
        return f"{self.M}-{self.kind.value.upper()}"


@dataclass(frozen=True)
class Constellation:
    scheme: ModulationScheme
    points: np.ndarray
    E_av: float

    def __post_init__(self):
        if self.points.size != self.scheme.M:
            raise ValueError(f"constellation has {self.points.size} points, expected {self.scheme.M}")

    def __len__(self) -> int:
        return self.points.size

    @property
    def mean_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))


def build_constellation(scheme: ModulationScheme, E_av: float = 1.0) -> Constellation:
    """Точки созвездия в порядке индекса m (для QAM построчно по (m1, m2))"""
    if not E_av > 0:
        raise ValueError(f"E_av must be positive, got {E_av}")
    M = scheme.M
    if scheme.kind is SchemeKind.ASK:
        m = np.arange(1, M + 1)
        points = math.sqrt(3.0 * E_av) * (2 * m - 1 - M) / math.sqrt(M * M - 1)
        points = points.astype(complex)
    elif scheme.kind is SchemeKind.PSK:
        m = np.arange(1, M + 1)
        points = math.sqrt(E_av) * np.exp(2j * np.pi * (m - 1) / M)
    elif scheme.kind is SchemeKind.QAM:
        side = math.isqrt(M)
        levels = math.sqrt(3.0 * E_av) * (2 * np.arange(1, side + 1) - 1 - side) / math.sqrt(2.0 * (M - 1))
        points = (levels[:, None] + 1j * levels[None, :]).ravel()
    else:
        points = math.sqrt(E_av) * np.array([1.0, 1j])
    return Constellation(scheme=scheme, points=np.asarray(points, dtype=complex), E_av=E_av)


def detect_ml_generic(z: ArrayLike, h_norm: ArrayLike, constellation: Constellation):
    """argmin |z - ||h|| s|^2; при равенстве выигрывает меньший индекс"""
    if len(constellation) == 0:
        raise ValueError("empty constellation")
    z = np.asarray(z, dtype=complex)
    h_norm = np.asarray(h_norm, dtype=float)
    if np.any(h_norm < 0):
        raise ValueError("h_norm must be non-negative")
    distances = np.abs(z[..., None] - h_norm[..., None] * constellation.points) ** 2
    decision = np.argmin(distances, axis=-1)
    return int(decision) if decision.ndim == 0 else decision


def detect_ask(z: ArrayLike, h_norm: ArrayLike, constellation: Constellation):
    """max s Re{z} - s^2 ||h|| / 2 по вещественным точкам ASK"""
    s = constellation.points.real
    z = np.asarray(z, dtype=complex)
    h_norm = np.asarray(h_norm, dtype=float)
    metric = s * z.real[..., None] - 0.5 * s * s * h_norm[..., None]
    decision = np.argmax(metric, axis=-1)
    return int(decision) if decision.ndim == 0 else decision


def detect_psk(z: ArrayLike, constellation: Constellation):
    """max Re{z s*}"""
    z = np.asarray(z, dtype=complex)
    metric = (z[..., None] * np.conj(constellation.points)).real
    decision = np.argmax(metric, axis=-1)
    return int(decision) if decision.ndim == 0 else decision


def detect_bfsk(z: ArrayLike):
    """Re{z} >= Im{z} -> 0 (символ sqrt(E)), иначе 1 (символ j sqrt(E))"""
    z = np.asarray(z, dtype=complex)
    decision = np.where(z.real >= z.imag, 0, 1)
    return int(decision) if decision.ndim == 0 else decision


def detect(z: ArrayLike, h_norm: ArrayLike, constellation: Constellation):
    """Быстрый детектор для схемы созвездия (QAM через общий ML)"""
    kind = constellation.scheme.kind
    if kind is SchemeKind.ASK:
        return detect_ask(z, h_norm, constellation)
    if kind is SchemeKind.PSK:
        return detect_psk(z, constellation)
    if kind is SchemeKind.BFSK:
        return detect_bfsk(z)
    return detect_ml_generic(z, h_norm, constellation)
