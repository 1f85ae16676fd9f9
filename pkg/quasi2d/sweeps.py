import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from quasi2d.errors import SweepError

logger = logging.getLogger(__name__)


@dataclass
class SweepResult:
    results: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def run_sweep(func: Callable[[Any], Any], keys: Iterable, jobs: int = 1,
              label: str = "sweep", strict: bool = False) -> SweepResult:
    """Evaluate func on every key; results come back sorted by key.

    func must be picklable when jobs > 1.
    """
    keys = list(keys)
    if len(set(keys)) != len(keys):
        raise ValueError(f"{label}: duplicate sweep keys")
    logger.info(f"Running {label} over {len(keys)} point(s) with {jobs} job(s)")

    raw, failures = {}, {}
    if jobs <= 1 or len(keys) <= 1:
        for key in keys:
            try:
                raw[key] = func(key)
            except Exception as e:
                logger.error(f"{label} failed at {key}: {e}")
                failures[key] = e
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {key: pool.submit(func, key) for key in keys}
            for key, future in futures.items():
                try:
                    raw[key] = future.result()
                except Exception as e:
                    logger.error(f"{label} failed at {key}: {e}")
                    failures[key] = e

    logger.info(f"{label} finished: {len(raw)} ok, {len(failures)} failed")
    result = SweepResult({k: raw[k] for k in sorted(raw)}, failures)
    if strict and failures:
        raise SweepError(failures)
    return result
