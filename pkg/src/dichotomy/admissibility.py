"""Admissibility testing without assuming a dichotomy.

The mild-solution operator is discretized as a block-bidiagonal linear
system (one trapezoid row block per grid cell, nN equations in n(N+1)
unknowns).  Bounded-solution selection on the truncated window closes the
system with projected boundary conditions bootstrapped from singular-value
splittings of long-window propagators; a weighted least-norm fallback
exists for ill-conditioned splittings.  Uniqueness over the real line is
probed by the trend of the smallest singular value of the constrained
homogeneous map across a sweep of growing windows.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .errors import InvalidInputError, WindowOverflowError
from .function_space import (GridFunction, lp_norm, mild_residual,
                             uniform_grid, validate_pair, y1_norm)

_SHIFT = -1e-12


# ---------------------------------------------------------------------------
# discrete operator assembly
# ---------------------------------------------------------------------------

class HSystem:
    """Discretization of the mild-solution operator on a uniform grid.

    Row block i encodes

        x_{i+1} - T(t_{i+1}, t_i) x_i = (h/2) (T(t_{i+1}, t_i) y_i + y_{i+1})

    The attribute `matrix` applies the left-hand side to the stacked node
    vector of x, `rhs_matrix` the right-hand side to the stacked y.  Both
    are sparse; the adjoints are their transposes.
    """

    def __init__(self, grid, steps, matrix, rhs_matrix, dim):
        self.grid = grid
        self.steps = steps
        self.matrix = matrix
        self.rhs_matrix = rhs_matrix
        self.dim = dim

    @property
    def h(self):
        return float(self.grid[1] - self.grid[0])

    def apply(self, values):
        """Left-hand side rows for node samples (N+1, n) -> (N, n)."""
        out = self.matrix @ np.asarray(values, dtype=float).ravel()
        return out.reshape(-1, self.dim)

    def rhs(self, values):
        """Right-hand side rows for forcing samples (N+1, n) -> (N, n)."""
        out = self.rhs_matrix @ np.asarray(values, dtype=float).ravel()
        return out.reshape(-1, self.dim)


def assemble_h(family, grid):
    """Build the discrete mild-solution system on the given grid."""
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 2:
        raise InvalidInputError("assembly needs at least two grid nodes")
    steps = family.one_step_propagators(grid)
    n = family.dim
    n_cells = len(grid) - 1
    h = grid[1] - grid[0]

    block_rows = (np.arange(n_cells)[:, None, None] * n
                  + np.arange(n)[None, :, None])
    block_cols = (np.arange(n_cells)[:, None, None] * n
                  + np.arange(n)[None, None, :])
    rows_t = np.broadcast_to(block_rows, steps.shape).ravel()
    cols_t = np.broadcast_to(block_cols, steps.shape).ravel()
    eye_rows = np.arange(n_cells * n)
    eye_cols = eye_rows + n

    shape = (n_cells * n, (n_cells + 1) * n)
    matrix = sp.coo_matrix(
        (np.concatenate([-steps.ravel(), np.ones(n_cells * n)]),
         (np.concatenate([rows_t, eye_rows]),
          np.concatenate([cols_t, eye_cols]))), shape=shape).tocsr()
    rhs_matrix = sp.coo_matrix(
        (np.concatenate([0.5 * h * steps.ravel(),
                         0.5 * h * np.ones(n_cells * n)]),
         (np.concatenate([rows_t, eye_rows]),
          np.concatenate([cols_t, eye_cols]))), shape=shape).tocsr()
    return HSystem(grid, steps, matrix, rhs_matrix, n)


# ---------------------------------------------------------------------------
# boundary closure from singular-subspace splittings
# ---------------------------------------------------------------------------

@dataclass
class BoundarySplitting:
    """Bootstrapped stable/unstable directions at the window ends.

    `left_rows` are orthonormal directions of x(-T_w) that a bounded
    solution cannot carry (stable and neutral singular directions of the
    forward propagator); `right_rows` the same at +T_w (unstable and
    neutral directions).  `margin` measures the distance of the singular
    spectrum to the classification thresholds; small margins mean an
    ill-conditioned closure.
    """
    left_rows: np.ndarray
    right_rows: np.ndarray
    stable_dim_left: int
    unstable_dim_right: int
    neutral_dim: int
    margin: float


def boundary_splitting(family, grid, horizon=None, rate_threshold=0.05):
    """Classify directions at the window ends by singular values of
    propagators over `horizon`: rates below -rate_threshold are stable,
    above +rate_threshold unstable, the band in between neutral."""
    grid = np.asarray(grid, dtype=float)
    span = grid[-1] - grid[0]
    if horizon is None:
        horizon = min(4.0, span / 2.0)
    horizon = min(horizon, span)

    m_left = family.propagator(grid[0] + horizon, grid[0])
    _, s_l, vt_l = np.linalg.svd(m_left)
    rates_l = np.log(np.maximum(s_l, 1e-300)) / horizon
    keep_left = rates_l <= rate_threshold          # stable + neutral
    left_rows = vt_l[keep_left]

    m_right = family.propagator(grid[-1], grid[-1] - horizon)
    u_r, s_r, _ = np.linalg.svd(m_right)
    rates_r = np.log(np.maximum(s_r, 1e-300)) / horizon
    keep_right = rates_r >= -rate_threshold        # unstable + neutral
    right_rows = u_r[:, keep_right].T

    all_rates = np.concatenate([rates_l, rates_r])
    margin = float(np.min(np.abs(np.abs(all_rates) - rate_threshold)))
    neutral = int(np.sum(np.abs(rates_l) < rate_threshold))
    return BoundarySplitting(
        left_rows=left_rows, right_rows=right_rows,
        stable_dim_left=int(np.sum(rates_l < -rate_threshold)),
        unstable_dim_right=int(np.sum(rates_r > rate_threshold)),
        neutral_dim=neutral, margin=margin)


def _boundary_matrix(splitting, n_nodes, dim):
    """Sparse boundary rows acting on the stacked node vector."""
    blocks = []
    width = n_nodes * dim
    if splitting.left_rows.shape[0]:
        left = sp.lil_matrix((splitting.left_rows.shape[0], width))
        left[:, :dim] = splitting.left_rows
        blocks.append(left.tocsr())
    if splitting.right_rows.shape[0]:
        right = sp.lil_matrix((splitting.right_rows.shape[0], width))
        right[:, -dim:] = splitting.right_rows
        blocks.append(right.tocsr())
    if not blocks:
        return sp.csr_matrix((0, width))
    return sp.vstack(blocks).tocsr()


# ---------------------------------------------------------------------------
# bounded-solution solver
# ---------------------------------------------------------------------------

class BoundedSolver:
    """Prefactorized bounded-solution solver on a fixed grid.

    `projected` mode appends the bootstrapped boundary rows and solves the
    (consistently overdetermined) system in least squares through the
    normal equations; `least-norm` mode returns the minimal weighted-l2
    solution of the underdetermined system, with per-node Gram matrices of
    the norm family as weights.
    """

    def __init__(self, family, norms, grid, boundary="projected", horizon=None,
                 rate_threshold=0.05):
        if boundary not in ("projected", "least-norm"):
            raise InvalidInputError(f"unknown boundary mode {boundary!r}")
        self.family = family
        self.norms = norms
        self.grid = np.asarray(grid, dtype=float)
        self.boundary = boundary
        self.system = assemble_h(family, self.grid)
        self.splitting = boundary_splitting(family, self.grid, horizon,
                                            rate_threshold)
        n_nodes = len(self.grid)
        dim = family.dim
        if boundary == "projected":
            bnd = _boundary_matrix(self.splitting, n_nodes, dim)
            self.constrained = sp.vstack([self.system.matrix, bnd]).tocsr()
            normal = (self.constrained.T @ self.constrained).tocsc()
            self._lu = splu(normal)
            self._weight_inv = None
        else:
            w_inv_blocks = []
            h = self.system.h
            for t in self.grid:
                g = norms.gram(t) * h
                w_inv_blocks.append(np.linalg.inv(g))
            self._weight_inv = sp.block_diag(w_inv_blocks, format="csr")
            a = self.system.matrix
            gram = (a @ self._weight_inv @ a.T).tocsc()
            self._lu = splu(gram)
            self.constrained = a

    def solve_values(self, y_values):
        """Node samples of the bounded solution for forcing samples y."""
        b = self.system.rhs_matrix @ np.asarray(y_values, dtype=float).ravel()
        if self.boundary == "projected":
            x = self._lu.solve(self.system.matrix.T @ b)
        else:
            lam = self._lu.solve(b)
            x = self._weight_inv @ (self.system.matrix.T @ lam)
        return x.reshape(len(self.grid), self.family.dim)

    def solve(self, y):
        if not np.allclose(y.grid, self.grid, atol=1e-12):
            raise InvalidInputError("forcing grid differs from the solver grid")
        return GridFunction(self.grid, self.solve_values(y.values), self.norms)


def solve_bounded(family, y, p=2, q=2, boundary="projected", norms=None,
                  horizon=None):
    """Bounded solution of the mild equation driven by y, plus diagnostics.

    Returns ``(x, info)`` where info records the mild residual, the boundary
    splitting margin, and the (p, q) norm ratio of the solve.
    """
    validate_pair(p, q)
    if norms is None:
        norms = y.family
    solver = BoundedSolver(family, norms, y.grid, boundary=boundary,
                           horizon=horizon)
    x = solver.solve(y)
    residual = mild_residual(x, y, family)
    y_norm = lp_norm(y, q)
    info = {
        "residual": residual,
        "boundary_margin": solver.splitting.margin,
        "neutral_dim": solver.splitting.neutral_dim,
        "ratio": (y1_norm(x, p) / y_norm) if y_norm > 0 else 0.0,
    }
    return x, info


# ---------------------------------------------------------------------------
# kernel diagnostics across a window sweep
# ---------------------------------------------------------------------------

@dataclass
class KernelReport:
    windows: list
    sigma_mins: list
    sigma_max: float
    floor: float
    verdict: str                      # "trivial" | "nontrivial" | "inconclusive"
    witness: GridFunction | None = None
    witness_ratio: float = math.inf
    witness_residual: float = math.inf
    notes: list = field(default_factory=list)


def _sigma_extremes(matrix):
    normal = (matrix.T @ matrix).tocsc()
    size = normal.shape[0]
    v0 = np.ones(size) / math.sqrt(size)
    low, vec = eigsh(normal, k=1, sigma=_SHIFT, which="LM", v0=v0)
    high = eigsh(normal, k=1, which="LM", v0=v0,
                 return_eigenvectors=False)
    s_min = math.sqrt(max(float(low[0]), 0.0))
    s_max = math.sqrt(max(float(high[0]), 0.0))
    return s_min, s_max, vec[:, 0]


def _homogeneous_witness(family, norms, grid, steps, direction):
    """Propagate a unit vector from the window center both ways; an exact
    member of the discrete homogeneous kernel (possibly unbounded)."""
    n_nodes = len(grid)
    center = n_nodes // 2
    n = family.dim
    values = np.zeros((n_nodes, n))
    values[center] = direction
    cap = 1e12
    ok = True
    for i in range(center, n_nodes - 1):
        values[i + 1] = steps[i] @ values[i]
        if not np.all(np.isfinite(values[i + 1])) or np.linalg.norm(values[i + 1]) > cap:
            ok = False
            values[i + 1] = np.minimum(values[i + 1], cap)
            break
    for i in range(center - 1, -1, -1):
        try:
            values[i] = np.linalg.solve(steps[i], values[i + 1])
        except np.linalg.LinAlgError:
            ok = False
            break
        if not np.all(np.isfinite(values[i])) or np.linalg.norm(values[i]) > cap:
            ok = False
            break
    if not ok:
        return None, math.inf, math.inf
    witness = GridFunction(grid, values, norms)
    node_norms = witness.node_norms()
    center_norm = node_norms[center]
    ratio = float(node_norms.max() / center_norm) if center_norm > 0 else math.inf
    prop = np.einsum("kij,kj->ki", steps, values[:-1])
    residual = float(np.max(np.linalg.norm(values[1:] - prop, axis=1)))
    return witness, ratio, residual


def kernel_check(family, norms, h, windows, horizon=None, floor_factor=1e-6,
                 decay_ratio=0.6, bounded_ratio=0.8, noise=0.10,
                 witness_bound=50.0, rate_threshold=0.05):
    """Smallest singular value of the constrained homogeneous map per window.

    A trend bounded away from zero as the window grows indicates a trivial
    kernel (uniqueness); a monotone decay toward zero together with a
    bounded homogeneous witness indicates uniqueness failure.  Neutral
    directions found by the boundary bootstrap are constrained at both ends,
    so neutral modes show up as an algebraic sigma_min decay rather than an
    exact zero.
    """
    if len(windows) < 2:
        raise InvalidInputError("kernel sweep needs at least two window lengths")
    windows = sorted(windows)
    sigma_mins = []
    sigma_max_last = 0.0
    minimizer = None
    last = None
    for t_w in windows:
        grid = uniform_grid(-t_w, t_w, h)
        system = assemble_h(family, grid)
        splitting = boundary_splitting(family, grid, horizon, rate_threshold)
        bnd = _boundary_matrix(splitting, len(grid), family.dim)
        constrained = sp.vstack([system.matrix, bnd]).tocsr()
        s_min, s_max, vec = _sigma_extremes(constrained)
        sigma_mins.append(s_min)
        sigma_max_last = s_max
        minimizer = vec
        last = (grid, system.steps)

    floor = floor_factor * sigma_max_last
    overall = sigma_mins[-1] / sigma_mins[0] if sigma_mins[0] > 0 else 0.0
    monotone = all(sigma_mins[i + 1] <= sigma_mins[i] * (1.0 + noise)
                   for i in range(len(sigma_mins) - 1))
    notes = []

    grid, steps = last
    values = minimizer.reshape(len(grid), family.dim)
    center = len(grid) // 2
    direction = values[center]
    scale = np.linalg.norm(direction)
    witness = None
    ratio = math.inf
    residual = math.inf
    if scale > 1e-12:
        witness, ratio, residual = _homogeneous_witness(
            family, norms, grid, steps, direction / scale)

    if sigma_mins[-1] <= floor:
        verdict = "nontrivial"
        notes.append("sigma_min below the absolute floor: exact discrete kernel")
    elif overall >= bounded_ratio:
        verdict = "trivial"
    elif overall <= decay_ratio and monotone:
        if witness is not None and ratio <= witness_bound:
            verdict = "nontrivial"
        else:
            verdict = "inconclusive"
            notes.append("sigma_min decays but no bounded homogeneous witness found")
    else:
        verdict = "inconclusive"
        if not monotone:
            notes.append("sigma_min trend is non-monotone beyond the noise margin")

    if verdict != "nontrivial":
        witness = None
    return KernelReport(windows=list(windows), sigma_mins=sigma_mins,
                        sigma_max=sigma_max_last, floor=floor, verdict=verdict,
                        witness=witness, witness_ratio=ratio,
                        witness_residual=residual, notes=notes)


# ---------------------------------------------------------------------------
# solution-operator norm
# ---------------------------------------------------------------------------

@dataclass
class GNormEstimate:
    value: float
    probe_ratios: list
    power_value: float
    stabilized: bool
    warning: str | None = None


def _cosine_bump(grid, center, width, direction):
    arg = (grid - center) / width
    profile = np.where(np.abs(arg) < 1.0, np.cos(0.5 * np.pi * arg) ** 2, 0.0)
    return profile[:, None] * direction[None, :]


def estimate_g_norm(family, norms, p, q, window, h, probes=8, seed=0,
                    boundary="projected", horizon=None, power_iters=40,
                    power_tol=1e-3):
    """Lower estimate of the solution-operator norm ||G|| for the pair (p, q).

    Maximum ratio over a seeded suite of compactly supported probes plus a
    power iteration on the weighted-l2 adjoint composition (whose final
    iterate is evaluated as one more probe in the stated norms).
    """
    p, q = validate_pair(p, q)
    grid = uniform_grid(-window, window, h)
    solver = BoundedSolver(family, norms, grid, boundary=boundary,
                           horizon=horizon)
    rng = np.random.default_rng(seed)
    n = family.dim
    margin = max(2.0, 0.25 * window)

    probe_values = []
    for _ in range(probes):
        width = rng.uniform(0.5, 2.0)
        center = rng.uniform(-(window - margin - width), window - margin - width)
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        probe_values.append(_cosine_bump(grid, center, width, direction))
    for j in range(n):
        direction = np.eye(n)[j]
        interior = GridFunction.indicator(grid, norms, -(window - margin),
                                          window - margin, direction)
        probe_values.append(interior.values)

    ratios = []
    for vals in probe_values:
        y = GridFunction(grid, vals, norms)
        denom = lp_norm(y, q)
        if denom <= 0.0:
            continue    # degenerate probe: the ratio is undefined
        x = solver.solve(y)
        ratios.append(y1_norm(x, p) / denom)

    # power iteration on the weighted-l2 adjoint composition
    grams = [norms.gram(t) * solver.system.h for t in grid]
    weight = sp.block_diag(grams, format="csr")
    weight_inv = sp.block_diag([np.linalg.inv(g) for g in grams], format="csr")
    a_mat = solver.system.matrix
    r_mat = solver.system.rhs_matrix

    def apply_g(yvec):
        return solver._lu.solve(a_mat.T @ (r_mat @ yvec))

    def apply_g_adjoint_weighted(xvec):
        return weight_inv @ (r_mat.T @ (a_mat @ solver._lu.solve(weight @ xvec)))

    yvec = rng.standard_normal(len(grid) * n)
    yvec /= math.sqrt(float(yvec @ (weight @ yvec)))
    rayleigh = 0.0
    stabilized = False
    for _ in range(power_iters):
        xvec = apply_g(yvec)
        new_rayleigh = math.sqrt(max(float(xvec @ (weight @ xvec)), 0.0))
        yvec_next = apply_g_adjoint_weighted(xvec)
        scale = math.sqrt(max(float(yvec_next @ (weight @ yvec_next)), 1e-300))
        yvec = yvec_next / scale
        if rayleigh > 0.0 and abs(new_rayleigh - rayleigh) <= power_tol * new_rayleigh:
            rayleigh = new_rayleigh
            stabilized = True
            break
        rayleigh = new_rayleigh

    power_probe = GridFunction(grid, yvec.reshape(len(grid), n), norms)
    denom = lp_norm(power_probe, q)
    if denom > 0.0:
        x = solver.solve(power_probe)
        ratios.append(y1_norm(x, p) / denom)

    warning = None
    if not stabilized:
        warning = "power iteration did not stabilize within the probe budget"
        warnings.warn(warning, RuntimeWarning)
    return GNormEstimate(value=float(max(ratios)), probe_ratios=ratios,
                         power_value=float(rayleigh), stabilized=stabilized,
                         warning=warning)


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass
class AdmissibilityConfig:
    window: float = 10.0
    h: float = 0.05
    sweep_windows: tuple = ()
    horizon: float | None = None
    probes: int = 6
    seed: int = 0
    boundary: str = "projected"
    residual_tol: float = 1e-6
    kernel_floor_factor: float = 1e-6
    decay_ratio: float = 0.6
    bounded_ratio: float = 0.8
    noise: float = 0.10
    witness_bound: float = 50.0
    rate_threshold: float = 0.05

    def windows(self):
        if self.sweep_windows:
            return list(self.sweep_windows)
        return [max(2.0, self.window / 4.0), self.window / 2.0, self.window]


@dataclass
class AdmissibilityReport:
    verdict: str
    p: float
    q: float
    window: float
    h: float
    g_norm_estimate: float | None
    kernel_sigma_min: list
    kernel_floor: float
    residual: float
    truncation: dict
    reconstruction_available: bool
    witness: GridFunction | None = None
    witness_ratio: float = math.inf
    notes: list = field(default_factory=list)

    def to_json(self):
        return {
            "verdict": self.verdict,
            "p": _exp_repr(self.p),
            "q": _exp_repr(self.q),
            "window": self.window,
            "h": self.h,
            "g_norm_estimate": self.g_norm_estimate,
            "kernel_sigma_min": self.kernel_sigma_min,
            "kernel_floor": self.kernel_floor,
            "residual": self.residual,
            "truncation": self.truncation,
            "reconstruction_available": self.reconstruction_available,
            "witness_ratio": (None if math.isinf(self.witness_ratio)
                              else self.witness_ratio),
            "notes": list(self.notes),
        }


def _exp_repr(p):
    return "inf" if p == math.inf else p


def _overflow_guard(family, window, h):
    grid = uniform_grid(-window, window, max(h, window / 50.0))
    steps = family.one_step_propagators(grid)
    logs = np.log(np.maximum(np.linalg.norm(steps, axis=(1, 2)), 1e-300))
    worst = float(np.max(np.abs(np.cumsum(logs))))
    if worst > 600.0:
        raise WindowOverflowError(
            f"propagator magnitude reaches e^{worst:.0f} on the window; "
            "shrink the window or rescale the system")


def check_admissibility(family, norms, p, q, config=None):
    """Full admissibility verdict for the pair (p, q).

    Orchestrates the kernel sweep, a probe suite of bounded solves with
    residual checks, and the solution-operator norm estimate.  The pair
    (inf, 1) is processed but flagged: the reconstruction direction is not
    available for it.
    """
    p, q = validate_pair(p, q)
    if config is None:
        config = AdmissibilityConfig()
    _overflow_guard(family, config.window, config.h)

    kernel = kernel_check(
        family, norms, config.h, config.windows(), horizon=config.horizon,
        floor_factor=config.kernel_floor_factor, decay_ratio=config.decay_ratio,
        bounded_ratio=config.bounded_ratio, noise=config.noise,
        witness_bound=config.witness_bound,
        rate_threshold=config.rate_threshold)

    notes = list(kernel.notes)
    reconstruction_available = not (p == math.inf and q == 1.0)
    if not reconstruction_available:
        notes.append("pair (inf, 1): reconstruction unavailable (excluded pair)")

    if kernel.verdict == "nontrivial":
        return AdmissibilityReport(
            verdict="not-admissible", p=p, q=q, window=config.window,
            h=config.h, g_norm_estimate=None,
            kernel_sigma_min=kernel.sigma_mins, kernel_floor=kernel.floor,
            residual=kernel.witness_residual, truncation={},
            reconstruction_available=reconstruction_available,
            witness=kernel.witness, witness_ratio=kernel.witness_ratio,
            notes=notes)
    if kernel.verdict == "inconclusive":
        return AdmissibilityReport(
            verdict="inconclusive", p=p, q=q, window=config.window,
            h=config.h, g_norm_estimate=None,
            kernel_sigma_min=kernel.sigma_mins, kernel_floor=kernel.floor,
            residual=math.inf, truncation={},
            reconstruction_available=reconstruction_available, notes=notes)

    grid = uniform_grid(-config.window, config.window, config.h)
    solver = BoundedSolver(family, norms, grid, boundary=config.boundary,
                           horizon=config.horizon,
                           rate_threshold=config.rate_threshold)
    rng = np.random.default_rng(config.seed)
    margin = max(2.0, 0.25 * config.window)
    worst_residual = 0.0
    for _ in range(config.probes):
        width = rng.uniform(0.5, 2.0)
        center = rng.uniform(-(config.window - margin - width),
                             config.window - margin - width)
        direction = rng.standard_normal(family.dim)
        direction /= np.linalg.norm(direction)
        y = GridFunction(grid, _cosine_bump(grid, center, width, direction),
                         norms)
        x = solver.solve(y)
        worst_residual = max(worst_residual, mild_residual(x, y, family))

    g_est = estimate_g_norm(family, norms, p, q, config.window, config.h,
                            probes=config.probes, seed=config.seed,
                            boundary=config.boundary, horizon=config.horizon)
    if g_est.warning:
        notes.append(g_est.warning)

    verdict = "admissible" if worst_residual <= config.residual_tol else "inconclusive"
    if verdict == "inconclusive":
        notes.append(
            f"probe residual {worst_residual:.2e} exceeds the tolerance "
            f"{config.residual_tol:.1e}")
    return AdmissibilityReport(
        verdict=verdict, p=p, q=q, window=config.window, h=config.h,
        g_norm_estimate=g_est.value, kernel_sigma_min=kernel.sigma_mins,
        kernel_floor=kernel.floor, residual=worst_residual,
        truncation={"probe_margin": margin},
        reconstruction_available=reconstruction_available, notes=notes)
