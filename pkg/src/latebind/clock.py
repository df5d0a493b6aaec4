"""Pluggable execution clocks.

The simulated clock charges modeled operator costs inflated by seeded
lognormal noise; charges are a pure function of (noise seed, event counter),
so two runs with the same seed agree bitwise and runs that differ only in
decision outcomes still draw identical noise per event.  The wall clock
measures real elapsed time of the supplied kernel and exists for sanity
checks only.
"""

from __future__ import annotations

import math
import time
from typing import Callable, TypeVar

from .rng import stream_unit

T = TypeVar("T")

SIMULATED = "simulated"
WALL = "wall"


class SimulatedClock:
    mode = SIMULATED

    def __init__(self, sigma: float = 0.05):
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        self.sigma = sigma

    def noise(self, seed: int, counter: int) -> float:
        """Lognormal multiplier exp(sigma * z), z standard normal."""
        if self.sigma == 0.0:
            return 1.0
        u = stream_unit(seed, 2 * counter, 2)
        u1 = min(u[0] + 2.0**-54, 1.0)
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u[1])
        return math.exp(self.sigma * z)

    def charge(self, model_cost: float, seed: int, counter: int,
               work: Callable[[], T] = lambda: None,
               modeled_only: bool = False) -> tuple[T, float]:
        result = work()
        return result, model_cost * self.noise(seed, counter)


class WallClock:
    """Charges real elapsed microseconds of the kernel; modeled-only events
    (the accelerator is a cost-model device, there is nothing to time) fall
    back to the model cost."""

    mode = WALL

    def charge(self, model_cost: float, seed: int, counter: int,
               work: Callable[[], T] = lambda: None,
               modeled_only: bool = False) -> tuple[T, float]:
        if modeled_only:
            return work(), model_cost
        t0 = time.perf_counter()
        result = work()
        return result, (time.perf_counter() - t0) * 1e6
