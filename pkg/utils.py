import logging
import sys
import threading
import traceback
from collections import OrderedDict
from typing import Any, Hashable, Optional, TextIO

LOG_FORMAT = '%(asctime)s [%(levelname)s] %(name)s: %(message)s'


# Настройка логирования
def setup_logger(name: str, level: int = logging.INFO, stream: Optional[TextIO] = None) -> logging.Logger:
    """Логгер с выводом в stderr: stdout остается за CSV"""
    logger = logging.getLogger(name)
    logger.setLevel(level)

    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr if stream is None else stream)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt='%H:%M:%S'))
        logger.addHandler(handler)

    return logger


# Безопасное выполнение проверок с логированием ошибок
def safe_execute(func, *args, default=None, log_errors=True, label: Optional[str] = None, **kwargs):
    """Выполняет func, при исключении пишет в лог и возвращает default"""
    try:
        return func(*args, **kwargs)
    except Exception as e:
        if log_errors:
            logger = logging.getLogger(func.__module__ if hasattr(func, '__module__') else 'utils')
            logger.error(f"{label or getattr(func, '__name__', func)} failed with {type(e).__name__}: {e}")
            logger.debug(traceback.format_exc())
        return default


def db_to_linear(snr_db: float) -> float:
    """Перевод дБ в линейный масштаб"""
    return 10.0 ** (snr_db / 10.0)


def fmt_sci(value: Optional[float]) -> str:
    """Число в научной нотации с 10 значащими цифрами (пустая строка для None)"""
    if value is None:
        return ''
    return f"{value:.9e}"


# Кэш для дорогих промежуточных величин
class SimpleCache:
    """Простой LRU-кэш в памяти, безопасный для потоков"""

    def __init__(self, max_size: int = 100):
        self.max_size = max_size
        self.cache: "OrderedDict[Hashable, Any]" = OrderedDict()
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def get(self, key: Hashable) -> Optional[Any]:
        """Получить значение из кэша"""
        with self._lock:
            if key in self.cache:
                self.cache.move_to_end(key)
                self.hits += 1
                return self.cache[key]
            self.misses += 1
            return None

    def set(self, key: Hashable, value: Any) -> None:
        """Сохранить значение в кэш"""
        with self._lock:
            if key in self.cache:
                self.cache.move_to_end(key)
            elif len(self.cache) >= self.max_size:
                # Удаляем самый старый элемент
                self.cache.popitem(last=False)
            self.cache[key] = value

    def get_or_compute(self, key: Hashable, compute) -> Any:
        """Значение из кэша или результат compute(); вставка атомарна"""
        value = self.get(key)
        if value is None:
            value = compute()
            with self._lock:
                # другой поток мог успеть первым: оставляем его значение
                if key in self.cache:
                    return self.cache[key]
            self.set(key, value)
        return value

    def clear(self) -> None:
        """Очистить кэш"""
        with self._lock:
            self.cache.clear()
            self.hits = 0
            self.misses = 0

    def __len__(self) -> int:
        return len(self.cache)
