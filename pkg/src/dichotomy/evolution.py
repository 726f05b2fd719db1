"""Evolutionary families: propagators T(t, tau) of nonautonomous linear systems.

Closed-form kinds (scalar exponents, diagonal systems, rotations, constant
matrices) evaluate exactly; generic systems x' = A(t) x are integrated with
classical Runge-Kutta on the matrix equation M' = A(t) M, M(tau) = I.
Only forward propagation (t >= tau) is exposed at this interface; backward
application on an unstable bundle lives with the modules that own
projections.
"""

import math

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, OrderError
from .norm_family import family_operator_norm

_CACHE_CAP = 4096


class EvolutionFamily:
    """Provider of propagator matrices T(t, tau), t >= tau.

    Attributes
    ----------
    dim : int
    kind : "closed-form" or "integrated"
    h_int : float
        Maximum internal step of the Runge-Kutta integrator (integrated kind).
    generator : callable or None
        t -> A(t); always present for integrated kinds, optionally for
        closed-form kinds (needed to build perturbed families).
    """

    def __init__(self, dim, kind, matrix_fn=None, generator=None,
                 h_int=1e-3, label=""):
        self.dim = int(dim)
        self.kind = kind
        self._matrix_fn = matrix_fn
        self.generator = generator
        self.h_int = float(h_int)
        self.label = label
        self._cache = {}

    # -- factories ---------------------------------------------------------

    @classmethod
    def scalar(cls, rate, h_int=1e-3):
        """Autonomous scalar system x' = rate * x."""
        rate = float(rate)
        return cls(
            1, "closed-form",
            matrix_fn=lambda t, tau: np.array([[math.exp(rate * (t - tau))]]),
            generator=lambda t: np.array([[rate]]),
            h_int=h_int, label=f"scalar(rate={rate})")

    @classmethod
    def scalar_closed_form(cls, primitive, generator=None, h_int=1e-3, label=""):
        """Scalar system with T(t, tau) = exp(g(t) - g(tau)) for a primitive g."""
        gen = None
        if generator is not None:
            gen = lambda t: np.array([[generator(t)]])
        return cls(
            1, "closed-form",
            matrix_fn=lambda t, tau: np.array([[math.exp(primitive(t) - primitive(tau))]]),
            generator=gen, h_int=h_int, label=label or "scalar-closed-form")

    @classmethod
    def oscillating_rate_scalar(cls, mean_rate=-3.0, amplitude=1.0, h_int=1e-3):
        """Scalar system with rate mean_rate - amplitude * t * sin(t).

        A Barreira-Valls-type nonuniform contraction: the propagator
        exp(mean_rate*(t-tau) + amplitude*(t cos t - tau cos tau - sin t + sin tau))
        decays in the mean while its constants degrade with |tau|.
        """
        a = float(amplitude)
        r = float(mean_rate)
        return cls.scalar_closed_form(
            primitive=lambda t: r * t + a * (t * math.cos(t) - math.sin(t)),
            generator=lambda t: r - a * t * math.sin(t),
            h_int=h_int, label=f"oscillating-rate(mean={r}, amp={a})")

    @classmethod
    def diagonal(cls, rates, h_int=1e-3):
        """Autonomous diagonal system with the given rates."""
        rates = np.asarray(rates, dtype=float)
        return cls(
            len(rates), "closed-form",
            matrix_fn=lambda t, tau: np.diag(np.exp(rates * (t - tau))),
            generator=lambda t: np.diag(rates),
            h_int=h_int, label=f"diagonal(rates={list(rates)})")

    @classmethod
    def rotation(cls, omega=1.0, h_int=1e-3):
        """Planar rotation x' = [[0, omega], [-omega, 0]] x (norm-preserving)."""
        w = float(omega)

        def mat(t, tau):
            c, s = math.cos(w * (t - tau)), math.sin(w * (t - tau))
            return np.array([[c, s], [-s, c]])

        return cls(2, "closed-form", matrix_fn=mat,
                   generator=lambda t: np.array([[0.0, w], [-w, 0.0]]),
                   h_int=h_int, label=f"rotation(omega={w})")

    @classmethod
    def autonomous(cls, a, h_int=1e-3):
        """Constant-coefficient system via the matrix exponential."""
        a = np.asarray(a, dtype=float)
        return cls(
            a.shape[0], "closed-form",
            matrix_fn=lambda t, tau: scipy.linalg.expm(a * (t - tau)),
            generator=lambda t, _a=a: _a,
            h_int=h_int, label="autonomous")

    @classmethod
    def from_generator(cls, a_fn, dim, h_int=1e-3, label="integrated"):
        """Generic system x' = A(t) x integrated with RK4, step <= h_int."""
        return cls(dim, "integrated", generator=a_fn, h_int=h_int, label=label)

    # -- evaluation ----------------------------------------------------------

    def propagator(self, t, tau):
        """T(t, tau) for t >= tau; exact for closed-form kinds."""
        if t < tau:
            raise OrderError(
                f"propagator requires t >= tau (got t={t}, tau={tau}); "
                "only forward propagation is exposed here")
        if t == tau:
            return np.eye(self.dim)
        if self.kind == "closed-form":
            return np.asarray(self._matrix_fn(t, tau), dtype=float)
        key = (round(float(tau), 10), round(float(t), 10))
        hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()
        m = self._rk4(tau, t)
        if len(self._cache) >= _CACHE_CAP:
            self._cache.clear()
        self._cache[key] = m
        return m.copy()

    def _rk4(self, tau, t):
        steps = max(1, math.ceil((t - tau) / self.h_int))
        h = (t - tau) / steps
        a = self.generator
        m = np.eye(self.dim)
        for k in range(steps):
            s = tau + k * h
            a0 = np.asarray(a(s), dtype=float)
            a1 = np.asarray(a(s + 0.5 * h), dtype=float)
            a2 = np.asarray(a(s + h), dtype=float)
            k1 = a0 @ m
            k2 = a1 @ (m + 0.5 * h * k1)
            k3 = a1 @ (m + 0.5 * h * k2)
            k4 = a2 @ (m + h * k3)
            m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return m

    def one_step_propagators(self, grid):
        """Array of cell propagators T(t_{i+1}, t_i) over a uniform grid."""
        grid = np.asarray(grid, dtype=float)
        n_cells = len(grid) - 1
        if n_cells < 1:
            raise InvalidInputError("grid needs at least two nodes")
        if self.kind == "closed-form":
            return np.stack([np.asarray(self._matrix_fn(grid[i + 1], grid[i]), dtype=float)
                             for i in range(n_cells)])
        return self._rk4_cells(grid)

    def _rk4_cells(self, grid):
        h_cell = grid[1] - grid[0]
        steps = max(1, math.ceil(h_cell / self.h_int))
        h = h_cell / steps
        n = self.dim
        a = self.generator
        mats = np.broadcast_to(np.eye(n), (len(grid) - 1, n, n)).copy()
        left = grid[:-1]
        for k in range(steps):
            t0 = left + k * h
            a0 = np.stack([np.asarray(a(t), dtype=float) for t in t0])
            a1 = np.stack([np.asarray(a(t + 0.5 * h), dtype=float) for t in t0])
            a2 = np.stack([np.asarray(a(t + h), dtype=float) for t in t0])
            k1 = a0 @ mats
            k2 = a1 @ (mats + 0.5 * h * k1)
            k3 = a1 @ (mats + 0.5 * h * k2)
            k4 = a2 @ (mats + h * k3)
            mats += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return mats


def cocycle_residual(family, tau, s, t):
    """Operator norm of T(t,s) T(s,tau) - T(t,tau); zero for exact cocycles."""
    if not (tau <= s <= t):
        raise OrderError(f"cocycle check requires tau <= s <= t, got ({tau}, {s}, {t})")
    composed = family.propagator(t, s) @ family.propagator(s, tau)
    direct = family.propagator(t, tau)
    return float(np.linalg.norm(composed - direct, 2))


def estimate_growth_bound(family, grid, norms, max_anchors=12, max_spans=24):
    """Fit constants (K, c) with ||T(t,tau)x||_t <= K e^{c(t-tau)} ||x||_tau.

    Least-squares on the log of the family-norm operator norm against the
    elapsed time, with K inflated so the bound covers every sample (K >= 1
    since the zero-span sample is included).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise InvalidInputError("growth estimation needs a nonempty grid")
    if grid[-1] - grid[0] < 1.0:
        raise InvalidInputError("growth estimation grid must span at least one unit interval")

    steps = family.one_step_propagators(grid)
    n_nodes = len(grid)
    anchor_idx = np.unique(np.linspace(0, n_nodes - 2, max_anchors).astype(int))
    spans = []
    logs = []
    for i in anchor_idx:
        target_idx = np.unique(np.linspace(i, n_nodes - 1, max_spans).astype(int))
        cum = np.eye(family.dim)
        j_prev = i
        for j in target_idx:
            for k in range(j_prev, j):
                cum = steps[k] @ cum
            j_prev = j
            val = family_operator_norm(norms, grid[j], grid[i], cum)
            spans.append(grid[j] - grid[i])
            logs.append(np.log(max(val, 1e-300)))
    spans = np.asarray(spans)
    logs = np.asarray(logs)
    a = np.vstack([np.ones_like(spans), spans]).T
    coef, *_ = np.linalg.lstsq(a, logs, rcond=None)
    c = float(coef[1])
    k = float(np.exp(np.max(logs - c * spans)))
    return max(k, 1.0), c
