import time


class Stopwatch:
    """Wall-clock context manager; `elapsed` holds the seconds spent inside the `with` block."""

    def __init__(self):
        self.elapsed = 0.0
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed += time.perf_counter() - self._start
        self._start = None
        return False
