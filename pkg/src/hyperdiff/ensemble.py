"""Averaging variance curves over disorder realizations."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .observables import MomentSeries

logger = logging.getLogger(__name__)


class EnsembleError(RuntimeError):
    def __init__(self, seed: int, cause: BaseException):
        super().__init__(f"realization with seed {seed} failed: {cause}")
        self.seed = seed
        self.cause = cause


def derive_seed(master_seed: int, k: int) -> int:
    """64-bit seed of realization ``k``, split off ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(k),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class EnsembleSpec:
    base: object  # forwarded to the runner untouched
    realization_count: int
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.realization_count < 1:
            raise ValueError("realization_count must be >= 1")

    @property
    def seeds(self) -> list[int]:
        return [derive_seed(self.master_seed, k) for k in range(self.realization_count)]


@dataclass
class EnsembleResult:
    series: MomentSeries
    realizations: list
    seeds: list[int]
    sigma2_min: np.ndarray
    sigma2_max: np.ndarray


def average_curves(curves: Sequence[np.ndarray]) -> np.ndarray:
    """Pointwise mean with correctly rounded sums, so the result does not depend on order."""
    stack = np.asarray(curves, dtype=float)
    n = stack.shape[0]
    return np.array([math.fsum(col) / n for col in stack.T])


def _call(args):
    runner, base, seed = args
    try:
        return runner(base, seed)
    except Exception as exc:  # noqa: BLE001 - re-raised with the seed attached
        raise EnsembleError(seed, exc) from exc


def run_ensemble(spec: EnsembleSpec, runner: Callable, workers: int = 1) -> EnsembleResult:
    """Run ``runner(spec.base, seed)`` for every derived seed and average the variance curves.

    ``runner`` must return an object with ``times``, ``sigma2`` and
    ``validity_horizon`` attributes; with ``workers > 1`` it must be picklable.
    Results are always combined in seed order.
    """
    seeds = spec.seeds
    jobs = [(runner, spec.base, s) for s in seeds]
    if workers <= 1 or len(seeds) == 1:
        results = [_call(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_call, jobs))
    times = np.asarray(results[0].times, dtype=float)
    for r in results[1:]:
        if not np.array_equal(np.asarray(r.times, dtype=float), times):
            raise ValueError("realizations do not share one record-time grid")
    curves = [np.asarray(r.sigma2, dtype=float) for r in results]
    mean = average_curves(curves)
    horizon = min(r.validity_horizon for r in results)
    series = MomentSeries.from_arrays(
        times, mean,
        source="ensemble-average" if len(results) > 1 else "single-run",
        realizations=len(results),
        validity_horizon=horizon,
    )
    stack = np.asarray(curves)
    logger.info("ensemble of %d realizations done", len(results))
    return EnsembleResult(series, results, seeds, stack.min(axis=0), stack.max(axis=0))
