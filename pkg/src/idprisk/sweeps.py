"""Analytic advantage surfaces over two-group budget compositions."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .accountant import DEFAULT_PLD, PldConfig, mechanism_advantage
from .calibration import DEFAULT_BACKEND, PrivacySpec, calibrate_sampling_idp
from .errors import DomainError
from .parallel import ordered_map


def training_context(total: int, batch_size: int, epochs: float) -> tuple[float, int]:
    """Expected batch size and epochs as ``(rate, steps)``; one epoch is ``ceil(N / b)`` steps."""
    if total < 1 or batch_size < 1 or not 0 < batch_size < total:
        raise DomainError("need 0 < batch_size < total")
    if epochs <= 0:
        raise DomainError("epochs must be positive")
    return batch_size / total, int(round(epochs * math.ceil(total / batch_size)))


@dataclass(frozen=True)
class SurfaceCell:
    eps2: float
    share2: float
    sigma: float
    rate1: float
    rate2: float
    advantage1: float
    advantage2: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Surface:
    eps1: float
    delta: float
    eps2: tuple[float, ...]
    shares: tuple[float, ...]
    cells: tuple[SurfaceCell, ...]

    def grid(self, group: int = 1) -> np.ndarray:
        """``(len(eps2), len(shares))`` array of one group's advantage."""
        attr = "advantage1" if group == 1 else "advantage2"
        return np.array([getattr(c, attr) for c in self.cells]).reshape(len(self.eps2), len(self.shares))


def _cell(point, eps1, delta, total, rate, steps, backend, method, config):
    eps2, share2 = point
    spec = PrivacySpec.two_groups(eps1, eps2, delta, total, share2)
    p = calibrate_sampling_idp(spec, rate, steps, backend=backend, method=method)
    return SurfaceCell(float(eps2), float(share2), p.sigma, p.rates[0], p.rates[1],
                       mechanism_advantage(p.mechanism(0), config),
                       mechanism_advantage(p.mechanism(1), config))


def advantage_surface(eps1: float, eps2: Sequence[float], shares: Sequence[float], delta: float,
                      total: int, rate: float, steps: int, backend: str = DEFAULT_BACKEND,
                      method: str = "exact", jobs: int = 1,
                      config: PldConfig = DEFAULT_PLD) -> Surface:
    """Both groups' advantage when a share ``p`` of the records holds budget ``eps2``.

    Cells are calibrated with ``method`` (default: mean rate solved exactly, so
    neighbouring cells do not jitter inside the batch-rate band).
    """
    points = [(float(e), float(p)) for e in eps2 for p in shares]
    work = functools.partial(_cell, eps1=eps1, delta=delta, total=total, rate=rate, steps=steps,
                             backend=backend, method=method, config=config)
    cells = ordered_map(work, points, jobs)
    return Surface(float(eps1), float(delta), tuple(float(e) for e in eps2),
                   tuple(float(p) for p in shares), tuple(cells))
