"""Grid-sampled functions of time and their Lp / sup norms in family norms.

Functions on the line are truncated to a finite window; every Lp integral is
a composite trapezoid rule over a uniform grid.  Inputs with jumps must
align the jump locations with grid nodes (sampled at the mean of the
one-sided limits), which keeps the quadrature error O(h^2) away from jumps.
"""

import math

import numpy as np

from .errors import (GridMismatchError, InvalidExponentError,
                     InvalidInputError, InvalidPairError)

_UNIFORM_RTOL = 1e-12


def uniform_grid(t_min, t_max, h):
    """Uniform grid over [t_min, t_max] with step h; h must divide the span."""
    span = t_max - t_min
    n_cells = int(round(span / h))
    if n_cells < 1 or abs(n_cells * h - span) > 1e-9 * max(1.0, abs(span)):
        raise InvalidInputError(
            f"step {h} does not divide the window [{t_min}, {t_max}]")
    return np.linspace(t_min, t_max, n_cells + 1)


def validate_exponent(p):
    if p != math.inf and (not np.isfinite(p) or p < 1.0):
        raise InvalidExponentError(f"Lebesgue exponent must lie in [1, inf], got {p}")
    return float(p)


def validate_pair(p, q):
    p = validate_exponent(p)
    q = validate_exponent(q)
    if p < q:
        raise InvalidPairError(f"admissible pairs require p >= q, got ({p}, {q})")
    return p, q


class GridFunction:
    """Vector-valued samples on a uniform time grid, tied to a norm family."""

    def __init__(self, grid, values, family):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if grid.ndim != 1 or len(grid) < 2:
            raise InvalidInputError("grid must hold at least two nodes")
        if values.shape[0] != len(grid):
            raise InvalidInputError("one sample row per grid node required")
        diffs = np.diff(grid)
        if np.any(diffs <= 0):
            raise InvalidInputError("grid must be strictly increasing")
        h = diffs[0]
        if np.any(np.abs(diffs - h) > _UNIFORM_RTOL * max(1.0, abs(h)) + 1e-9 * h):
            raise InvalidInputError("grid must be uniform")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("samples must be finite")
        if family.dim != values.shape[1]:
            raise InvalidInputError(
                f"family dimension {family.dim} != sample dimension {values.shape[1]}")
        self.grid = grid
        self.values = values
        self.family = family

    @property
    def h(self):
        return float(self.grid[1] - self.grid[0])

    @property
    def dim(self):
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid, family):
        return cls(grid, np.zeros((len(grid), family.dim)), family)

    @classmethod
    def from_callable(cls, grid, family, fn):
        vals = np.stack([np.atleast_1d(np.asarray(fn(t), dtype=float)) for t in grid])
        return cls(grid, vals, family)

    @classmethod
    def indicator(cls, grid, family, a, b, vector):
        """chi_[a, b] times a constant vector, sampled with half weight at the
        jump nodes (the mean of the one-sided limits); a and b must sit on
        grid nodes."""
        grid = np.asarray(grid, dtype=float)
        h = grid[1] - grid[0]
        for edge in (a, b):
            if np.min(np.abs(grid - edge)) > 1e-9 * max(1.0, h):
                raise InvalidInputError(
                    f"indicator edge {edge} must coincide with a grid node")
        vector = np.atleast_1d(np.asarray(vector, dtype=float))
        vals = np.zeros((len(grid), len(vector)))
        inside = (grid > a) & (grid < b)
        vals[inside] = vector
        vals[np.isclose(grid, a, atol=1e-9 * max(1.0, h))] = 0.5 * vector
        vals[np.isclose(grid, b, atol=1e-9 * max(1.0, h))] = 0.5 * vector
        return cls(grid, vals, family)

    def node_norms(self):
        return self.family.norms(self.grid, self.values)

    def same_grid(self, other):
        return (len(self.grid) == len(other.grid)
                and np.allclose(self.grid, other.grid, atol=1e-12))

    def __add__(self, other):
        if not self.same_grid(other):
            raise GridMismatchError("grid functions live on different grids")
        return GridFunction(self.grid, self.values + other.values, self.family)

    def __sub__(self, other):
        if not self.same_grid(other):
            raise GridMismatchError("grid functions live on different grids")
        return GridFunction(self.grid, self.values - other.values, self.family)

    def __mul__(self, scalar):
        return GridFunction(self.grid, self.values * float(scalar), self.family)

    __rmul__ = __mul__

    def value_at(self, t):
        idx = int(np.argmin(np.abs(self.grid - t)))
        if abs(self.grid[idx] - t) > 1e-9 * max(1.0, self.h):
            raise InvalidInputError(f"time {t} is not a grid node")
        return self.values[idx].copy()

    # -- serialization -----------------------------------------------------

    def write_csv(self, path):
        header = "t," + ",".join(f"x{j + 1}" for j in range(self.dim))
        data = np.column_stack([self.grid, self.values])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    @classmethod
    def read_csv(cls, path, family):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:], family)


def lp_norm(f, p):
    """||f||_p in the family norms: trapezoid quadrature of ||f(t)||_t^p for
    finite p, max over nodes for p = inf."""
    p = validate_exponent(p)
    norms = f.node_norms()
    if p == math.inf:
        return float(norms.max())
    return float(np.trapezoid(norms ** p, f.grid) ** (1.0 / p))


def y1_norm(f, p):
    """Norm on Lp intersected with the bounded continuous functions:
    max of the Lp norm and the sup norm."""
    return max(lp_norm(f, p), lp_norm(f, math.inf))


def mild_residual(x, y, family):
    """Maximal one-step defect of the variation-of-constants identity.

    For each cell the identity x(t_{i+1}) = T(t_{i+1},t_i) x(t_i) + local
    integral is checked with the trapezoid approximation
    (h/2)(T(t_{i+1},t_i) y_i + y_{i+1}); the defect is measured in the norm
    at t_{i+1}.  Small one-step residuals propagate to all (t, tau) pairs
    through the cocycle identity.
    """
    if not x.same_grid(y):
        raise GridMismatchError("solution and forcing must share a grid")
    steps = family.one_step_propagators(x.grid)
    h = x.h
    xv, yv = x.values, y.values
    prop_x = np.einsum("kij,kj->ki", steps, xv[:-1])
    prop_y = np.einsum("kij,kj->ki", steps, yv[:-1])
    defect = xv[1:] - prop_x - 0.5 * h * (prop_y + yv[1:])
    norms = x.family.norms(x.grid[1:], defect)
    return float(norms.max())
