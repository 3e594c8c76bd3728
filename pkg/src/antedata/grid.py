"""Log-space densities on uniform 1-D parameter grids.

Every integral over the parameter domain is a trapezoid sum on a
:class:`ParameterGrid`. Densities are stored as log-weights so that
posteriors and likelihood ratios never under- or overflow; ``-inf`` is a
legal log-weight and means zero density.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    DegenerateDensityError,
    DivergenceError,
    DomainError,
    GridMismatchError,
    SupportMismatchError,
)

#: Fraction of mass on truncated boundary nodes above which normalize() warns.
BOUNDARY_WARN_FRACTION = 1e-6

Support = Tuple[float, float]
REAL_LINE: Support = (-math.inf, math.inf)


class BoundaryMassWarning(UserWarning):
    """Non-negligible mass sits on a grid end that truncates the support."""


@dataclass(frozen=True)
class ParameterGrid:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DomainError(f"grid bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise DomainError(f"grid needs lo < hi, got lo={self.lo}, hi={self.hi}")
        if int(self.n) != self.n or self.n < 3:
            raise DomainError(f"grid needs n >= 3 nodes, got {self.n}")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "n", int(self.n))

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(self.lo, self.hi, self.n)
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights; ``weights @ f`` is the quadrature of ``f``."""
        w = np.full(self.n, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        w.setflags(write=False)
        return w

    def truncated_ends(self, support: Optional[Support] = None) -> Tuple[bool, bool]:
        """Which grid ends cut off part of ``support``.

        An end within one spacing of the support bound counts as reaching it.
        """
        s_lo, s_hi = support if support is not None else REAL_LINE
        h = self.spacing
        return (self.lo - s_lo > h, s_hi - self.hi > h)


def make_grid(lo: float, hi: float, n: int) -> ParameterGrid:
    return ParameterGrid(lo, hi, n)


def _check_same_grid(a: ParameterGrid, b: ParameterGrid) -> None:
    if a != b:
        raise GridMismatchError(f"densities live on different grids: {a} vs {b}")


def quadrature(values, grid: ParameterGrid) -> float:
    """Trapezoid rule over ``grid``."""
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.n,):
        raise DomainError(f"expected {grid.n} values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError("quadrature needs finite values")
    # (sum - half endpoints) * h keeps constants exact
    return float((v.sum() - 0.5 * (v[0] + v[-1])) * grid.spacing)


def log_quadrature(logv, grid: ParameterGrid) -> float:
    """``log(quadrature(exp(logv)))`` with a max shift; ``-inf`` allowed."""
    lv = np.asarray(logv, dtype=float)
    if lv.shape != (grid.n,):
        raise DomainError(f"expected {grid.n} values, got shape {lv.shape}")
    if np.any(np.isnan(lv)) or np.any(lv == np.inf):
        raise DivergenceError("log-integrand contains nan or +inf")
    m = lv.max()
    if m == -np.inf:
        return -math.inf
    return float(m + math.log(quadrature(np.exp(lv - m), grid)))


def boundary_mass(logw, grid: ParameterGrid, support: Optional[Support] = None) -> float:
    """Fraction of quadrature mass on grid ends that truncate ``support``."""
    lw = np.asarray(logw, dtype=float)
    lz = log_quadrature(lw, grid)
    if lz == -math.inf:
        return 0.0
    cut_lo, cut_hi = grid.truncated_ends(support)
    frac = 0.0
    half = 0.5 * grid.spacing
    if cut_lo:
        frac += half * math.exp(lw[0] - lz)
    if cut_hi:
        frac += half * math.exp(lw[-1] - lz)
    return frac


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Normalized log-density values at the nodes of ``grid``."""

    grid: ParameterGrid
    logw: np.ndarray = field(repr=False)

    def __post_init__(self):
        lw = np.array(self.logw, dtype=float)
        if lw.shape != (self.grid.n,):
            raise DomainError(f"expected {self.grid.n} log-weights, got shape {lw.shape}")
        if np.any(np.isnan(lw)) or np.any(lw == np.inf):
            raise DomainError("log-weights must be finite or -inf")
        lw.setflags(write=False)
        object.__setattr__(self, "logw", lw)

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.logw)

    @property
    def support_mask(self) -> np.ndarray:
        return self.logw > -np.inf

    def mean(self) -> float:
        return expectation(lambda t: t, self)

    def var(self) -> float:
        m = self.mean()
        return expectation(lambda t: (t - m) ** 2, self)

    def argmax(self) -> float:
        return float(self.grid.nodes[int(np.argmax(self.logw))])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "log_density"])
        for t, lw in zip(self.grid.nodes, self.logw):
            w.writerow([repr(float(t)), repr(float(lw))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridDensity":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["theta", "log_density"]:
            raise DomainError("density CSV must start with header theta,log_density")
        theta = np.array([float(r[0]) for r in rows[1:]])
        logw = np.array([float(r[1]) for r in rows[1:]])
        grid = ParameterGrid(theta[0], theta[-1], len(theta))
        if not np.allclose(theta, grid.nodes, rtol=0, atol=8 * np.finfo(float).eps * max(1.0, abs(grid.hi), abs(grid.lo))):
            raise DomainError("density CSV nodes are not a uniform grid")
        return cls(grid, logw)


def normalize(
    logw, grid: ParameterGrid, support: Optional[Support] = None
) -> Tuple[GridDensity, float]:
    """Normalize log-weights on ``grid``; returns the density and ``log Z``.

    Warns with :class:`BoundaryMassWarning` when more than
    ``BOUNDARY_WARN_FRACTION`` of the mass sits on grid ends that cut into
    ``support`` (default: the real line).
    """
    lw = np.asarray(logw, dtype=float)
    if lw.shape != (grid.n,):
        raise DomainError(f"expected {grid.n} log-weights, got shape {lw.shape}")
    if np.all(lw == -np.inf):
        raise DegenerateDensityError("all log-weights are -inf")
    logz = log_quadrature(lw, grid)
    if not math.isfinite(logz):
        raise DivergenceError(f"normalizer is not finite (log Z = {logz})")
    out = lw - logz
    frac = boundary_mass(out, grid, support)
    if frac > BOUNDARY_WARN_FRACTION:
        warnings.warn(
            f"{frac:.3g} of the mass sits on truncated grid ends; widen [lo, hi]",
            BoundaryMassWarning,
            stacklevel=2,
        )
    return GridDensity(grid, out), logz


def expect_values(values, p: GridDensity) -> float:
    """Quadrature of ``values * p`` where nodes with zero density contribute 0."""
    v = np.asarray(values, dtype=float)
    if v.shape != (p.grid.n,):
        raise DomainError(f"expected {p.grid.n} values, got shape {v.shape}")
    mask = p.support_mask
    if not np.all(np.isfinite(v[mask])):
        raise DomainError("integrand is not finite where the density is positive")
    prod = np.where(mask, v, 0.0) * p.density
    return quadrature(prod, p.grid)


def expectation(f: Union[Callable[[np.ndarray], np.ndarray], Sequence[float]], p: GridDensity) -> float:
    """``E_p[f]``; ``f`` is a vectorized callable of the nodes or an array."""
    vals = f(p.grid.nodes) if callable(f) else f
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (p.grid.n,))
    with np.errstate(invalid="ignore"):
        return expect_values(vals, p)


def kl_divergence(p: GridDensity, q: GridDensity) -> float:
    """``KL(p || q)`` by quadrature, with ``0 log 0 = 0``."""
    _check_same_grid(p.grid, q.grid)
    mask = p.support_mask
    if np.any(q.logw[mask] == -np.inf):
        raise SupportMismatchError("p has mass where q has none")
    diff = np.where(mask, p.logw - np.where(mask, q.logw, 0.0), 0.0)
    return quadrature(diff * p.density, p.grid)


def sup_log_diff(p: GridDensity, q: GridDensity, mass: float = 0.99) -> float:
    """Max |log p - log q| over the central ``mass`` of ``q``."""
    _check_same_grid(p.grid, q.grid)
    cdf = np.cumsum(q.density * q.grid.weights)
    tail = 0.5 * (1.0 - mass)
    keep = (cdf >= tail) & (cdf <= 1.0 - tail)
    if not np.any(keep):
        keep = q.logw == q.logw.max()
    return float(np.max(np.abs(p.logw[keep] - q.logw[keep])))
