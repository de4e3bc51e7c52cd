"""
Настройки вычислительного ядра из переменных окружения (.env)
"""

import logging
import os
from dataclasses import dataclass

from dotenv import load_dotenv

# Загрузка переменных окружения
load_dotenv()


def _read_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {raw!r}")
    return value


def _read_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        value = int(float(raw))
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {raw!r}")
    return value


@dataclass(frozen=True)
class Settings:
    log_level: int = logging.INFO
    tol: float = 1e-10
    rel_tol: float = 1e-10
    p_max: int = 40
    n_max: int = 16
    mp_dps: int = 50
    workers: int = 1
    chunk_size: int = 100_000
    target_errors: int = 200
    max_trials: int = 100_000_000

    @classmethod
    def from_env(cls) -> "Settings":
        """Собрать настройки из окружения"""
        level_name = os.getenv('FAS_LOG_LEVEL', 'INFO').upper()
        level = logging.getLevelName(level_name)
        if not isinstance(level, int):
            raise ValueError(f"FAS_LOG_LEVEL must be a logging level name, got {level_name!r}")

        p_max_raw = os.getenv('FAS_P_MAX')
        p_max = 40
        if p_max_raw is not None and p_max_raw.strip() != '':
            try:
                p_max = int(p_max_raw)
            except ValueError:
                raise ValueError(f"FAS_P_MAX must be an integer, got {p_max_raw!r}")
            if p_max < 0:
                raise ValueError(f"FAS_P_MAX must be >= 0, got {p_max_raw!r}")

        return cls(
            log_level=level,
            tol=_read_float('FAS_TOL', 1e-10),
            rel_tol=_read_float('FAS_REL_TOL', 1e-10),
            p_max=p_max,
            n_max=_read_int('FAS_N_MAX', 16),
            mp_dps=_read_int('FAS_MP_DPS', 50),
            workers=_read_int('FAS_WORKERS', 1),
            chunk_size=_read_int('FAS_CHUNK_SIZE', 100_000),
            target_errors=_read_int('FAS_TARGET_ERRORS', 200),
            max_trials=_read_int('FAS_MAX_TRIALS', 100_000_000),
        )


settings = Settings.from_env()
