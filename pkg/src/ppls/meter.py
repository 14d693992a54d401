"""Accumulates wall-clock time per category across role threads."""
from __future__ import annotations

import threading
import time
from collections import defaultdict
from contextlib import contextmanager


class CostMeter:
    def __init__(self):
        self._totals: dict[str, float] = defaultdict(float)
        self._lock = threading.Lock()

    @contextmanager
    def measure(self, category: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            with self._lock:
                self._totals[category] += elapsed

    def total(self, category: str) -> float:
        with self._lock:
            return self._totals.get(category, 0.0)

    def reset(self) -> None:
        with self._lock:
            self._totals.clear()


NULL_METER = CostMeter()
