"""Operator norms of the parametrix remainder ``S(z)`` across ``|z|``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from ..errors import DomainError
from ..opnorm import matrix_operator, opnorm_power_iter
from ..region import remainder_exponent
from .kernel import assemble_parametrix, operator_matrix
from .transport import TransportCoefficients


@dataclass
class SweepRow:
    z: complex
    lower_bound: float
    resolution: float


@dataclass
class RemainderSweep:
    """Lower bounds of ``||S(z)||_{p->q}`` and their log-log slope in ``|z|``.

    ``exponent`` is the predicted power of ``|z|`` for the ``(p, q)`` regime;
    the measured ``slope`` should not exceed it by more than the sampling
    noise. ``slope`` is NaN with fewer than two distinct moduli.
    """

    p: float
    q: float
    n: int
    rows: list = field(default_factory=list)
    slope: float = math.nan
    exponent: float = math.nan

    def table(self):
        return [(r.z.real, r.z.imag, abs(r.z), r.lower_bound, r.resolution) for r in self.rows]


def remainder_norm_sweep(coeffs: TransportCoefficients, z_list, p: float, q: float,
                         rho: float = 0.5, part: str = "S", seeds: int = 2,
                         seed: int = 0) -> RemainderSweep:
    """Power-iteration lower bounds of the remainder on the coefficient grid.

    Norms use the grid cell volume as weight; the factor ``sqrt(det g)`` is
    part of the matrix. Every grid point must be a center.
    """
    if not (1 <= p <= 2 <= q):
        raise DomainError(f"need 1 <= p <= 2 <= q, got p={p}, q={q}")
    grid = coeffs.grid
    n = grid.n
    out = RemainderSweep(p, q, n, exponent=float(remainder_exponent(p, q, n)))
    for z in z_list:
        pk = assemble_parametrix(coeffs, complex(z), rho)
        apply, adjoint = matrix_operator(operator_matrix(pk, part))
        est = opnorm_power_iter(apply, adjoint, p, q, shape=(grid.size,),
                                weight=grid.cell_volume, seeds=seeds, seed=seed)
        res = float(np.max(grid.spacing) * math.sqrt(abs(z)))
        out.rows.append(SweepRow(complex(z), est.lower_bound, res))
    mods = np.array([abs(r.z) for r in out.rows])
    vals = np.array([r.lower_bound for r in out.rows])
    if np.unique(mods).size >= 2 and np.all(vals > 0):
        out.slope = float(linregress(np.log(mods), np.log(vals)).slope)
    return out
