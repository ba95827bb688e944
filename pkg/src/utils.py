"""
Utility functions for carbospec.
Contains logging setup, atomic file output, thread-count and split helpers.
"""

import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from loguru import logger

from .config import CARBOSPEC_THREADS, LOG_FILE, LOG_LEVEL

T = TypeVar("T")
R = TypeVar("R")


def setup_logging(level: str = LOG_LEVEL, log_file: Optional[str] = LOG_FILE) -> None:
    """
    Configure loguru sinks: stderr at `level`, plus an optional rotating file.

    Args:
        level (str): Minimum level for the stderr sink
        log_file (Optional[str]): Path of a log file, or None for no file sink
    """
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format="{time:HH:mm:ss} | {level: <8} | {message}")
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(log_file, rotation="10 MB", level="DEBUG")


def resolve_threads(requested: Optional[int] = None) -> int:
    """
    Resolve the worker thread count from a flag value or CARBOSPEC_THREADS.

    Args:
        requested (Optional[int]): Value given on the command line

    Returns:
        int: Thread count, at least 1
    """
    threads = requested if requested is not None else CARBOSPEC_THREADS
    return max(1, int(threads))


def ordered_map(func: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    Map `func` over `items` on up to `threads` workers, preserving input order.

    Args:
        func: Function applied to every item
        items: Items to process
        threads (int): Worker count; 1 runs inline

    Returns:
        List of results in the order of `items`
    """
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """
    Write bytes to `path` via a temporary file and rename on completion.

    Args:
        path (Path): Destination file
        data (bytes): Full file content
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    """Write UTF-8 text with LF line endings atomically."""
    atomic_write_bytes(path, text.encode("utf-8"))


def split_indices(n: int, train_fraction: float, seed: int, shuffle: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Seeded train/test split of `n` row indices.

    Returns:
        tuple: (train indices, test indices), each in ascending order
    """
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    n_train = int(round(n * train_fraction))
    n_train = min(max(n_train, 1), n)
    return np.sort(order[:n_train]), np.sort(order[n_train:])
