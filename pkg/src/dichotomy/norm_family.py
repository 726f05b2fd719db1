"""Families of time-dependent norms on R^n.

A norm family assigns to each time t a norm ||.||_t on R^n that is
sandwiched between the Euclidean base norm and C*exp(eps*|t|) times it.
Supported kinds: constant (base norm), scalar-weighted w(t)*||.||,
diagonal-weighted ||W(t)x||, and adapted families built from a certified
evolutionary family so that nonuniform decay becomes uniform contraction.

Only piecewise-continuous weight functions are admitted; families are
immutable after construction and norm evaluation is pure.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

_LOWER_MARGIN = 1e-12


class NormFamily:
    """Time-indexed norms ||x||_t = ||W(t) x||_2 for a weight matrix W(t).

    Parameters
    ----------
    dim : int
        Dimension n of the state space.
    kind : str
        One of "constant", "scalar-weighted", "diagonal-weighted".
    weight : callable or None
        Map t -> scalar, diagonal vector, or (n, n) matrix, depending on
        kind.  None means the constant family (W = I).
    envelope_c, envelope_eps : float
        Declared envelope constants: ||x|| <= ||x||_t <= C e^{eps|t|}||x||.
    """

    def __init__(self, dim, kind="constant", weight=None, envelope_c=1.0,
                 envelope_eps=0.0):
        if dim < 1:
            raise InvalidInputError("dimension must be a positive integer")
        if envelope_c < 1.0 - _LOWER_MARGIN:
            raise InvalidInputError(
                "envelope constant C must be >= 1 (lower bound ||x|| <= ||x||_t)")
        if envelope_eps < 0.0:
            raise InvalidInputError("envelope exponent eps must be >= 0")
        self.dim = int(dim)
        self.kind = kind
        self.envelope_c = float(envelope_c)
        self.envelope_eps = float(envelope_eps)
        self._weight = weight

    # -- construction -----------------------------------------------------

    @classmethod
    def constant(cls, dim):
        """The base Euclidean norm at every time."""
        return cls(dim, kind="constant")

    @classmethod
    def scalar_weight(cls, dim, weight, envelope_c=None, envelope_eps=0.0):
        """Family w(t)*||x||_2 for a positive scalar weight function."""
        if envelope_c is None:
            envelope_c = 1.0
        return cls(dim, kind="scalar-weighted", weight=weight,
                   envelope_c=envelope_c, envelope_eps=envelope_eps)

    @classmethod
    def diagonal_weight(cls, dim, weight, envelope_c=None, envelope_eps=0.0):
        """Family ||diag(w(t)) x||_2 for a positive vector weight function."""
        if envelope_c is None:
            envelope_c = 1.0
        return cls(dim, kind="diagonal-weighted", weight=weight,
                   envelope_c=envelope_c, envelope_eps=envelope_eps)

    # -- evaluation --------------------------------------------------------

    def weight_matrix(self, t):
        """Matrix W(t) with ||x||_t = ||W(t) x||_2, or None if not matrix-induced."""
        if self.kind == "constant":
            return np.eye(self.dim)
        if self.kind == "scalar-weighted":
            return float(self._weight(t)) * np.eye(self.dim)
        if self.kind == "diagonal-weighted":
            return np.diag(np.asarray(self._weight(t), dtype=float))
        return None

    def gram(self, t):
        """Gram matrix G(t) with ||x||_t^2 = x^T G(t) x (approximate for
        families not induced by a weight matrix)."""
        w = self.weight_matrix(t)
        if w is not None:
            return w.T @ w
        # fall back to the scaling of the basis directions
        scales = np.array([self.norm(t, e) for e in np.eye(self.dim)])
        return np.diag(scales ** 2)

    def norm(self, t, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidInputError(
                f"expected a vector of dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("norm evaluated on non-finite components")
        if self.kind == "constant":
            return float(np.linalg.norm(x))
        if self.kind == "scalar-weighted":
            return float(self._weight(t)) * float(np.linalg.norm(x))
        return float(np.linalg.norm(self.weight_matrix(t) @ x))

    def norms(self, ts, xs):
        """Vectorised norm evaluation: ts (m,), xs (m, n) -> (m,)."""
        ts = np.asarray(ts, dtype=float)
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            raise InvalidInputError("norm evaluated on non-finite components")
        if self.kind == "constant":
            return np.linalg.norm(xs, axis=1)
        if self.kind == "scalar-weighted":
            w = np.array([float(self._weight(t)) for t in ts])
            return w * np.linalg.norm(xs, axis=1)
        return np.array([self.norm(t, x) for t, x in zip(ts, xs)])


class AdaptedNormFamily(NormFamily):
    """Lyapunov norms tabulated on a time grid.

    Stores, per tabulation node t_k, the matrices whose suprema define the
    adapted norm

        ||x||_t = sup_s e^{(alpha-m)s} ||T(t+s,t)P(t)x||
                + sup_s e^{(beta-m)s} ||T(t-s,t)_| Q(t)x||

    over a discretized horizon s in [0, L].  Between nodes the norm is
    interpolated linearly in its value (a convex combination of norms is a
    norm).  Evaluation outside the tabulated range raises.
    """

    def __init__(self, dim, tgrid, stable_mats, unstable_mats,
                 envelope_c, envelope_eps, stabilization_defect, horizon):
        super().__init__(dim, kind="adapted", weight=None,
                         envelope_c=envelope_c, envelope_eps=envelope_eps)
        self.tgrid = np.asarray(tgrid, dtype=float)
        self._stable = stable_mats      # (m, S, n, n) or None
        self._unstable = unstable_mats  # (m, S, n, n) or None
        self.stabilization_defect = float(stabilization_defect)
        self.horizon = float(horizon)

    def weight_matrix(self, t):
        if self.dim == 1:
            return np.array([[self._interp_value(float(t), np.ones(1))]])
        return None

    def _node_norm(self, k, x):
        total = 0.0
        if self._stable is not None:
            total += float(np.max(np.linalg.norm(self._stable[k] @ x, axis=1)))
        if self._unstable is not None:
            total += float(np.max(np.linalg.norm(self._unstable[k] @ x, axis=1)))
        return total

    def _interp_value(self, t, x):
        g = self.tgrid
        if t < g[0] - 1e-9 or t > g[-1] + 1e-9:
            raise InvalidInputError(
                f"time {t} outside the tabulated window [{g[0]}, {g[-1]}]")
        j = int(np.clip(np.searchsorted(g, t) - 1, 0, len(g) - 2))
        theta = (t - g[j]) / (g[j + 1] - g[j])
        theta = min(max(theta, 0.0), 1.0)
        return (1.0 - theta) * self._node_norm(j, x) + theta * self._node_norm(j + 1, x)

    def norm(self, t, x):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("norm evaluated on non-finite components")
        return self._interp_value(float(t), x)

    def norms(self, ts, xs):
        return np.array([self.norm(t, x) for t, x in zip(ts, xs)])

    def scaling_table(self):
        """(t, scaling of each basis direction) table for inspection."""
        rows = np.empty((len(self.tgrid), 1 + self.dim))
        rows[:, 0] = self.tgrid
        eye = np.eye(self.dim)
        for k in range(len(self.tgrid)):
            rows[k, 1:] = [self._node_norm(k, e) for e in eye]
        return rows

    def write_scaling_csv(self, path):
        header = "t," + ",".join(f"s{j + 1}" for j in range(self.dim))
        np.savetxt(path, self.scaling_table(), delimiter=",",
                   header=header, comments="", fmt="%.17g")


def norm_at(family, t, x):
    """Evaluate ||x||_t; raises on non-finite input components."""
    return family.norm(t, x)


@dataclass
class EnvelopeReport:
    """Result of checking the two-sided envelope on a sample set."""
    max_lower_violation: float
    max_upper_violation: float
    fitted_c: float
    fitted_eps: float
    covering_c: float

    @property
    def holds(self):
        return self.max_lower_violation <= 0.0 and self.max_upper_violation <= 0.0


def verify_envelope(family, sample_times, sample_vectors):
    """Check ||x|| <= ||x||_t <= C e^{eps|t|} ||x|| on samples and fit (C, eps).

    Violations are relative to the base norm of the sample; a positive value
    means the corresponding inequality fails.  The fitted pair comes from a
    least-squares fit of log sup_x ||x||_t/||x|| against |t| with the slope
    clamped at zero; `covering_c` additionally inflates the intercept so the
    upper bound holds on every sample.
    """
    sample_times = list(sample_times)
    sample_vectors = [np.asarray(v, dtype=float) for v in sample_vectors]
    if not sample_times or not sample_vectors:
        raise InvalidInputError("envelope check requires nonempty samples")
    for v in sample_vectors:
        if np.linalg.norm(v) == 0.0:
            raise InvalidInputError("envelope samples must be nonzero vectors")

    lower_violation = -np.inf
    upper_violation = -np.inf
    sup_ratio = np.zeros(len(sample_times))
    for i, t in enumerate(sample_times):
        ratios = []
        for v in sample_vectors:
            base = np.linalg.norm(v)
            r = family.norm(t, v) / base
            ratios.append(r)
            lower_violation = max(lower_violation, 1.0 - r)
            bound = family.envelope_c * np.exp(family.envelope_eps * abs(t))
            upper_violation = max(upper_violation, r / bound - 1.0)
        sup_ratio[i] = max(ratios)

    ts = np.abs(np.asarray(sample_times, dtype=float))
    logs = np.log(sup_ratio)
    if np.ptp(ts) < 1e-12:
        eps_hat = 0.0
        c_hat = float(np.exp(logs.mean()))
    else:
        a = np.vstack([np.ones_like(ts), ts]).T
        coef, *_ = np.linalg.lstsq(a, logs, rcond=None)
        eps_hat = max(float(coef[1]), 0.0)
        if coef[1] >= 0.0:
            c_hat = float(np.exp(coef[0]))
        else:
            # ties broken by minimal eps: refit the intercept at slope zero
            c_hat = float(np.exp(logs.mean()))
    covering_c = float(np.exp(np.max(logs - eps_hat * ts)))
    return EnvelopeReport(float(lower_violation), float(upper_violation),
                          c_hat, eps_hat, max(covering_c, 1.0))


def family_operator_norm(family, t_out, t_in, m, directions=None):
    """Operator norm of the matrix m from (R^n, ||.||_{t_in}) to (R^n, ||.||_{t_out}).

    Exact via SVD when both norms are induced by weight matrices; otherwise a
    supremum over sampled unit directions (exact for n = 1).
    """
    m = np.asarray(m, dtype=float)
    w_out = family.weight_matrix(t_out)
    w_in = family.weight_matrix(t_in)
    if w_out is not None and w_in is not None:
        return float(np.linalg.norm(w_out @ m @ np.linalg.inv(w_in), 2))
    n = family.dim
    if directions is None:
        directions = _unit_directions(n)
    best = 0.0
    for d in directions:
        denom = family.norm(t_in, d)
        if denom > 0.0:
            best = max(best, family.norm(t_out, m @ d) / denom)
    return best


def _unit_directions(n, count=512, seed=7):
    if n == 1:
        return [np.ones(1)]
    if n == 2:
        angles = np.linspace(0.0, np.pi, count, endpoint=False)
        return [np.array([np.cos(a), np.sin(a)]) for a in angles]
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, n))
    return list(dirs / np.linalg.norm(dirs, axis=1, keepdims=True))


def build_lyapunov_norms(family, cert, rate_margin, horizon,
                         tgrid=None, s_step=None, stabilization_tol=1e-6):
    """Construct adapted norms under which a certified dichotomy contracts
    uniformly at the certified rates minus `rate_margin`.

    The norm at t is the sum of a forward supremum over the stable range of
    the certificate projections and a backward supremum over the unstable
    range, both truncated at `horizon` and discretized with step `s_step`.
    A stabilization defect (relative change of the suprema when the horizon
    is halved) above `stabilization_tol` is recorded and warned about.
    """
    import warnings

    alpha, beta = cert.alpha, cert.beta
    if not (0.0 < rate_margin < min(alpha, beta)):
        raise InvalidInputError(
            "rate margin must lie strictly inside (0, min(alpha, beta))")
    n = family.dim
    if tgrid is None:
        tgrid = cert.grid
    tgrid = np.asarray(tgrid, dtype=float)
    if s_step is None:
        s_step = max(horizon / 400.0, 1e-3)
    s_vals = np.arange(0.0, horizon + s_step / 2, s_step)
    lam_s = alpha - rate_margin
    lam_u = beta - rate_margin

    stable_rank = cert.stable_rank
    has_stable = stable_rank > 0
    has_unstable = stable_rank < n

    stable_mats = None
    unstable_mats = None
    defect = 0.0
    half = len(s_vals) // 2

    if has_stable:
        stable_mats = np.zeros((len(tgrid), len(s_vals), n, n))
        for k, t in enumerate(tgrid):
            p = cert.projection_nearest(t)
            for j, s in enumerate(s_vals):
                stable_mats[k, j] = np.exp(lam_s * s) * (family.propagator(t + s, t) @ p)
        defect = max(defect, _sup_defect(stable_mats, half))

    if has_unstable:
        from .green import unstable_pullback_matrix

        unstable_mats = np.zeros((len(tgrid), len(s_vals), n, n))
        for k, t in enumerate(tgrid):
            q = cert.complementary_nearest(t)
            for j, s in enumerate(s_vals):
                pull = unstable_pullback_matrix(family, cert, t - s, t)
                unstable_mats[k, j] = np.exp(lam_u * s) * (pull @ q)
        defect = max(defect, _sup_defect(unstable_mats, half))

    if defect > stabilization_tol:
        warnings.warn(
            f"adapted-norm horizon {horizon} has not stabilized "
            f"(relative change {defect:.2e} when halved); increase the horizon",
            RuntimeWarning)

    fam = AdaptedNormFamily(n, tgrid, stable_mats, unstable_mats,
                            envelope_c=1.0, envelope_eps=0.0,
                            stabilization_defect=defect, horizon=horizon)
    # declared envelope: covering fit over the tabulated nodes
    probe_vectors = list(np.eye(n))
    rep = verify_envelope(fam, list(tgrid), probe_vectors)
    fam.envelope_eps = rep.fitted_eps
    fam.envelope_c = rep.covering_c
    return fam


def _sup_defect(mats, half):
    """Relative change of per-node suprema when the s-range is halved."""
    if half < 1:
        return 0.0
    full = np.linalg.norm(mats, axis=(2, 3)).max(axis=1)
    trunc = np.linalg.norm(mats[:, :half], axis=(2, 3)).max(axis=1)
    denom = np.where(full > 0.0, full, 1.0)
    return float(np.max(np.abs(full - trunc) / denom))
