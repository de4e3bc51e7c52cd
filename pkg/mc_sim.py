"""
Монте-Карло моделирование приемника: коррелированные замирания, выбор K лучших портов,
MRC и ML-детектирование
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import islice
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy import stats

from cf_engine import FasConfig
from correlation import FadingVector, sample_fading_batch
from modem import Constellation, ModulationScheme, build_constellation, detect
from settings import settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class McEstimate:
    trials: int
    errors: int
    ci_low: float
    ci_high: float
    seed: int

    def __post_init__(self):
        if self.trials < 1 or not 0 <= self.errors <= self.trials:
            raise ValueError(f"invalid counts: errors={self.errors}, trials={self.trials}")

    @property
    def ser(self) -> float:
        return self.errors / self.trials


@dataclass(frozen=True)
class ReceiveSample:
    h: FadingVector
    r: np.ndarray
    selected: np.ndarray
    z: complex
    gamma_fas: float
    symbol: int
    decision: int


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """Независимый поток Philox для чанка (seed, chunk_index)"""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    return np.random.Generator(np.random.Philox(sequence))


def wilson_interval(errors: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Доверительный интервал Уилсона для доли ошибок"""
    if trials < 1 or not 0 <= errors <= trials:
        raise ValueError(f"invalid counts: errors={errors}, trials={trials}")
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    p = errors / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return max(0.0, min(center - half, p)), min(1.0, max(center + half, p))


def select_best_k(snrs, K: int) -> np.ndarray:
    """Индексы K наибольших значений по последней оси (при равенстве меньший индекс)"""
    snrs = np.asarray(snrs, dtype=float)
    N = snrs.shape[-1]
    if not 1 <= K <= N:
        raise ValueError(f"K must satisfy 1 <= K <= N={N}, got {K}")
    return np.argsort(-snrs, axis=-1, kind='stable')[..., :K]


def mrc_combine(h_sel, r_sel):
    """sum conj(h) r / ||h|| по последней оси"""
    h_sel = np.asarray(h_sel, dtype=complex)
    r_sel = np.asarray(r_sel, dtype=complex)
    norm = np.linalg.norm(h_sel, axis=-1)
    if np.any(norm == 0.0):
        raise ValueError("MRC needs a non-zero channel vector")
    z = np.sum(np.conj(h_sel) * r_sel, axis=-1) / norm
    return complex(z) if np.ndim(z) == 0 else z


def _complex_noise(rng: np.random.Generator, shape, sigma_n2: float) -> np.ndarray:
    scale = math.sqrt(sigma_n2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_receive_sample(cfg: FasConfig, constellation: Constellation,
                        rng: np.random.Generator) -> ReceiveSample:
    """Одна передача через всю цепочку приема"""
    symbol = int(rng.integers(len(constellation)))
    h = sample_fading_batch(1, cfg.N, cfg.model, rng)[0]
    r = h * constellation.points[symbol] + _complex_noise(rng, cfg.N, cfg.sigma_n2)
    snrs = cfg.E_av * np.abs(h) ** 2 / cfg.sigma_n2
    selected = select_best_k(snrs, cfg.K)
    z = mrc_combine(h[selected], r[selected])
    h_norm = float(np.linalg.norm(h[selected]))
    return ReceiveSample(
        h=FadingVector(h), r=r, selected=selected, z=z,
        gamma_fas=float(snrs[selected].sum()), symbol=symbol,
        decision=int(detect(z, h_norm, constellation)),
    )


def _count_errors(cfg: FasConfig, scheme: ModulationScheme, seed: int, chunk_index: int,
                  size: int) -> Tuple[int, int]:
    rng = chunk_rng(seed, chunk_index)
    constellation = build_constellation(scheme, cfg.E_av)
    symbols = rng.integers(len(constellation), size=size)
    h = sample_fading_batch(size, cfg.N, cfg.model, rng)
    r = h * constellation.points[symbols][:, None] + _complex_noise(rng, h.shape, cfg.sigma_n2)
    selected = select_best_k(np.abs(h) ** 2, cfg.K)
    h_sel = np.take_along_axis(h, selected, axis=1)
    r_sel = np.take_along_axis(r, selected, axis=1)
    h_norm = np.linalg.norm(h_sel, axis=1)
    # нулевой канал имеет нулевую вероятность; такой отсчет считается ошибкой
    safe_norm = np.where(h_norm > 0, h_norm, 1.0)
    z = np.sum(np.conj(h_sel) * r_sel, axis=1) / safe_norm
    decisions = detect(z, h_norm, constellation)
    errors = int(np.count_nonzero((decisions != symbols) | (h_norm == 0)))
    return errors, size


def _chunk_sizes(max_trials: int, chunk_size: int) -> Iterator[Tuple[int, int]]:
    index, done = 0, 0
    while done < max_trials:
        size = min(chunk_size, max_trials - done)
        yield index, size
        index += 1
        done += size


def simulate_ser(cfg: FasConfig, scheme: ModulationScheme, max_trials: Optional[int] = None,
                 target_errors: Optional[int] = None, seed: int = 0, chunk_size: Optional[int] = None,
                 workers: Optional[int] = None) -> McEstimate:
    """SER методом Монте-Карло; результат зависит только от (seed, chunk_size, конфигурации)"""
    max_trials = settings.max_trials if max_trials is None else int(max_trials)
    target_errors = settings.target_errors if target_errors is None else int(target_errors)
    chunk_size = settings.chunk_size if chunk_size is None else int(chunk_size)
    workers = settings.workers if workers is None else int(workers)
    if max_trials < 1:
        raise ValueError(f"max_trials must be >= 1, got {max_trials}")
    if target_errors < 1 or chunk_size < 1 or workers < 1:
        raise ValueError("target_errors, chunk_size and workers must be >= 1")

    chunks = _chunk_sizes(max_trials, chunk_size)
    errors = trials = 0
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while True:
            batch = list(islice(chunks, workers))
            if not batch:
                break
            args = [(cfg, scheme, seed, index, size) for index, size in batch]
            if executor is None:
                results = [_count_errors(*a) for a in args]
            else:
                results = list(executor.map(_count_errors, *zip(*args)))
            # правило остановки по префиксу чанков: число процессов не влияет на результат
            stopped = False
            for chunk_errors, chunk_trials in results:
                errors += chunk_errors
                trials += chunk_trials
                if errors >= target_errors:
                    stopped = True
                    break
            if stopped:
                break
    finally:
        if executor is not None:
            executor.shutdown()

    low, high = wilson_interval(errors, trials)
    logger.info(f"MC {scheme.label} N={cfg.N} K={cfg.K} Gamma={cfg.gamma_av:.4g}: "
                f"{errors} errors in {trials} trials (seed={seed})")
    return McEstimate(trials=trials, errors=errors, ci_low=low, ci_high=high, seed=seed)


def simulate_gamma_fas(cfg: FasConfig, n: int, seed: int = 0, chunk_size: Optional[int] = None) -> np.ndarray:
    """Выборка gamma_FAS = E_av ||h_[K]||^2 / sigma_n^2"""
    chunk_size = settings.chunk_size if chunk_size is None else int(chunk_size)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    samples = []
    for index, size in _chunk_sizes(n, chunk_size):
        rng = chunk_rng(seed, index)
        power = np.abs(sample_fading_batch(size, cfg.N, cfg.model, rng)) ** 2
        top = -np.partition(-power, cfg.K - 1, axis=1)[:, :cfg.K]
        samples.append(cfg.E_av * top.sum(axis=1) / cfg.sigma_n2)
    return np.concatenate(samples)


def empirical_cf(x: float, samples: np.ndarray) -> Tuple[float, float]:
    """Среднее exp(x gamma) и его стандартная ошибка"""
    if x > 0:
        raise ValueError(f"x must be <= 0, got {x}")
    values = np.exp(x * np.asarray(samples, dtype=float))
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))
