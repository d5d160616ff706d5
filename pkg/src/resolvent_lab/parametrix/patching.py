"""Gluing local operators on the torus with a quadratic partition of unity."""
from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError
from ..torus import TorusGrid
from .kernel import psi0


def _split(count: int, n: int):
    """Bumps per axis whose product is ``count``, as even as possible."""
    per = [1] * n
    left = count
    for axis in range(n):
        k = round(left ** (1.0 / (n - axis)))
        while left % k:
            k -= 1
        per[axis] = k
        left //= k
    return per


def torus_partition(grid: TorusGrid, count: int = 8, width: float = 1.5):
    """Cutoffs ``chi_j`` with ``sum_j chi_j^2 = 1`` on the grid.

    Bump centers form a periodic lattice with ``count`` points. Each bump is
    a product of ``psi_0(|x_i - c_i| / w_i)`` with ``w_i = width * pi / k_i``.
    Every point is within ``pi / k_i`` of a center, so ``width > 1`` leaves
    no gaps and makes neighbouring patches overlap. Returns an array
    ``(count, *grid.shape)``.
    """
    if width <= 1:
        raise DomainError("patch width must exceed 1 so that patches overlap")
    per = _split(count, grid.n)
    coords = grid.coords(sparse=True)
    bumps = []
    for idx in np.ndindex(*per):
        b = np.ones(grid.shape)
        for axis, (j, k) in enumerate(zip(idx, per)):
            if k == 1:
                continue
            c = 2 * math.pi * (j + 0.5) / k
            gap = np.abs((coords[axis] - c + math.pi) % (2 * math.pi) - math.pi)
            b = b * psi0(gap / (width * math.pi / k))
        bumps.append(b)
    bumps = np.array(bumps)
    return bumps / np.sqrt(np.sum(bumps**2, axis=0))


def glue(chis, local_ops):
    """``u -> sum_j chi_j T_j (chi_j u)`` for local operators ``T_j``."""
    chis = np.asarray(chis)
    if len(local_ops) != chis.shape[0]:
        raise DomainError("need one local operator per cutoff")

    def apply(u):
        return sum(c * op(c * u) for c, op in zip(chis, local_ops))

    return apply
