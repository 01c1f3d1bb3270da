# extensions.py
import logging
import os

from joblib import Memory, Parallel, delayed
from rich.console import Console
from rich.logging import RichHandler

# Общие объекты процесса: консоль, кэш на диске и пул воркеров
console = Console(stderr=True)
memory = Memory(location=None, verbose=0)

_state = {'workers': 1}


def init_logging(level: str = 'INFO') -> None:
    logging.basicConfig(
        level=level.upper(),
        format='%(message)s',
        datefmt='[%X]',
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=False)],
        force=True,
    )


def init_cache(location: str | None) -> None:
    """Переключить joblib.Memory на каталог (None: без диска)."""
    global memory
    memory = Memory(location=location, verbose=0)


def set_workers(n: int | None) -> None:
    _state['workers'] = max(1, int(n or os.cpu_count() or 1))


def get_workers() -> int:
    return _state['workers']


def parallel_map(func, items, workers: int | None = None) -> list:
    """
    Порядок результатов совпадает с порядком items при любом числе воркеров,
    поэтому редукции поверх списка воспроизводимы.
    """
    items = list(items)
    n_jobs = workers or get_workers()
    if n_jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    return Parallel(n_jobs=n_jobs, prefer='processes')(delayed(func)(item) for item in items)
