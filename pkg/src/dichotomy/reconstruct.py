"""Converse direction: from admissibility to a dichotomy certificate.

Projections are reconstructed through the test-input construction: for each
basis vector e_j the forcing g_j(t) = chi_[tau, tau+1](t) T(t, tau) e_j is
fed to the bounded-solution operator, and column j of P(tau) is
v_j(tau) + e_j.  Rates come in two flavours: the conservative constants
from the doubling-time argument (C, T, lambda = ln 2 / T, D = 2C) and
empirically fitted decay/expansion rates, which are the ones installed in
certificates.  On a truncated window the unstable bundle is the
finite-window surrogate (dominant backward-reachable subspace); every
certificate carries that caveat.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .admissibility import (AdmissibilityConfig, BoundedSolver,
                            check_admissibility)
from .errors import ExcludedPairError, InvalidInputError
from .evolution import estimate_growth_bound
from .function_space import uniform_grid, validate_pair
from .green import DichotomyCertificate
from .norm_family import family_operator_norm

_FINITE_WINDOW_NOTE = ("unstable bundle is the finite-window surrogate "
                       "(dominant backward-reachable subspace)")


@dataclass
class SubspacePair:
    """Stable/unstable splitting at a single time."""
    tau: float
    stable_basis: np.ndarray
    unstable_basis: np.ndarray
    min_principal_angle: float

    @property
    def complete(self):
        return (self.stable_basis.shape[1] + self.unstable_basis.shape[1]
                == self.stable_basis.shape[0])


def subspace_pair(projection, tau, angle_threshold=1e-6):
    """Orthonormal bases of range/kernel of a projection matrix."""
    p = np.asarray(projection, dtype=float)
    n = p.shape[0]
    u, s, _ = np.linalg.svd(p)
    rank = int(np.sum(s > 1e-6 * max(s[0], 1.0))) if s[0] > 1e-10 else 0
    stable = u[:, :rank]
    uq, sq, _ = np.linalg.svd(np.eye(n) - p)
    rank_q = int(np.sum(sq > 1e-6 * max(sq[0], 1.0))) if sq[0] > 1e-10 else 0
    unstable = uq[:, :rank_q]
    if rank and rank_q:
        overlaps = np.linalg.svd(stable.T @ unstable, compute_uv=False)
        angle = float(np.arccos(np.clip(overlaps[0], -1.0, 1.0)))
    else:
        angle = math.pi / 2.0
    if rank + rank_q == n and angle < angle_threshold:
        raise InvalidInputError(
            f"stable/unstable bases at tau={tau} are nearly parallel "
            f"(principal angle {angle:.2e})")
    return SubspacePair(tau=float(tau), stable_basis=stable,
                        unstable_basis=unstable, min_principal_angle=angle)


@dataclass
class MembershipReport:
    member: bool
    sup_norm: float
    tail_lp: float
    growth_ratio: float
    overflow: bool = False


def stable_membership(family, norms, tau, x, horizon, step=0.05, p=2,
                      growth_tol=0.05):
    """Forward-boundedness test for membership in the stable set at tau.

    Compares the running supremum of ||T(t, tau) x||_t over [tau, tau+H]
    with the one over [tau, tau+2H]; membership is declared when the
    supremum does not grow (ratio within `growth_tol`).  Also reports the
    windowed Lp norm of the forward orbit.
    """
    x = np.asarray(x, dtype=float)
    if np.linalg.norm(x) == 0.0:
        return MembershipReport(member=True, sup_norm=0.0, tail_lp=0.0,
                                growth_ratio=1.0)
    grid = uniform_grid(tau, tau + 2.0 * horizon, step)
    steps = family.one_step_propagators(grid)
    orbit = np.empty((len(grid), len(x)))
    orbit[0] = x
    overflow = False
    for i in range(len(grid) - 1):
        orbit[i + 1] = steps[i] @ orbit[i]
        if not np.all(np.isfinite(orbit[i + 1])) or \
                np.linalg.norm(orbit[i + 1]) > 1e150:
            overflow = True
            orbit = orbit[:i + 2]
            grid = grid[:i + 2]
            break
    node_norms = norms.norms(grid, orbit)
    if overflow:
        return MembershipReport(member=False, sup_norm=float(node_norms.max()),
                                tail_lp=math.inf, growth_ratio=math.inf,
                                overflow=True)
    half = len(grid) // 2
    sup_half = float(node_norms[:half + 1].max())
    sup_full = float(node_norms.max())
    ratio = sup_full / sup_half if sup_half > 0 else math.inf
    tail = float(np.trapezoid(node_norms ** p, grid) ** (1.0 / p)) \
        if p != math.inf else sup_full
    return MembershipReport(member=ratio <= 1.0 + growth_tol,
                            sup_norm=sup_full, tail_lp=tail,
                            growth_ratio=ratio)


def projection_at(solver, tau, pulse_length=1.0, pulse="smooth"):
    """Reconstruct P(tau) from bounded solves of pulse-propagated basis vectors.

    For each basis vector the forcing psi(t) T(t, tau) e_j with a unit-mass
    pulse psi supported on [tau, tau+1] is fed to the bounded solver, and
    column j of the projection is v_j(tau) + e_j; the identity only uses
    the unit mass of the pulse, not its profile.  `pulse="smooth"` (default)
    uses the C^1 profile (1 - cos(2 pi (t-tau)/l))/l whose trapezoid sums
    stay clear of jump-node artifacts; `pulse="indicator"` uses the sharp
    characteristic function sampled with half weight at its edges, which
    carries an O(h) defect at the pulse nodes.  The result is never
    symmetrized: dichotomy projections need not be orthogonal.
    """
    grid = solver.grid
    h = grid[1] - grid[0]
    i_tau = int(np.argmin(np.abs(grid - tau)))
    if abs(grid[i_tau] - tau) > 1e-9 * max(1.0, h):
        raise InvalidInputError(f"tau={tau} must be a grid node")
    cells = int(round(pulse_length / h))
    if abs(cells * h - pulse_length) > 1e-9 or i_tau + cells >= len(grid):
        raise InvalidInputError(
            "pulse [tau, tau+1] must be grid-aligned and inside the window")
    if pulse == "smooth":
        offsets = np.arange(cells + 1) * h / pulse_length
        profile = (1.0 - np.cos(2.0 * np.pi * offsets)) / pulse_length
    elif pulse == "indicator":
        profile = np.ones(cells + 1) / pulse_length
        profile[0] = profile[-1] = 0.5 / pulse_length
    else:
        raise InvalidInputError(f"unknown pulse profile {pulse!r}")
    n = solver.family.dim
    steps = solver.system.steps
    proj = np.empty((n, n))
    for j in range(n):
        e_j = np.eye(n)[:, j]
        values = np.zeros((len(grid), n))
        vec = e_j.copy()
        values[i_tau] = profile[0] * vec
        for k in range(cells):
            vec = steps[i_tau + k] @ vec
            values[i_tau + k + 1] = profile[k + 1] * vec
        v = solver.solve_values(values)
        proj[:, j] = v[i_tau] + e_j
    return proj


def projection_bound(g_norm, growth_k, growth_c):
    """Bound M = K^2 e^{2c} ||G|| + 1 on the family-norm size of the
    reconstructed projections."""
    return growth_k ** 2 * math.exp(2.0 * growth_c) * g_norm + 1.0


@dataclass
class RateEstimates:
    """Conservative constants of the doubling-time argument plus fits."""
    lower_c: float          # C with C ||T(t,tau)x||_t >= ||x||_tau on the bundle
    doubling_time: float    # least elapsed time forcing norm doubling
    lam: float              # ln 2 / doubling_time
    d_const: float          # 2 C
    theta: float
    alpha_fit: float | None = None
    beta_fit: float | None = None
    d_fit: float | None = None

    def to_json(self):
        return {
            "lower_c": self.lower_c,
            "doubling_time": self.doubling_time,
            "lambda": self.lam,
            "d_const": self.d_const,
            "theta": self.theta,
            "alpha_fit": self.alpha_fit,
            "beta_fit": self.beta_fit,
            "d_fit": self.d_fit,
        }


def doubling_time_and_rates(g_norm, growth_k, growth_c, p, q,
                            fitted=None):
    """Conservative dichotomy constants from the admissibility bound.

    C = 2 K e^c ||G||; the doubling time T is the least elapsed time that
    makes 2 K e^c ||G||^2 / (t - tau)^theta <= 1/2 with
    theta = 1 - 1/q + 1/p, i.e. T = (4 K e^c ||G||^2)^(1/theta); then
    lambda = ln 2 / T and D = 2 C.  The pair (inf, 1) has theta = 0 and is
    refused.  `fitted` optionally carries empirically fitted rates to embed
    in the result (the conservative rates are deliberately loose).
    """
    p, q = validate_pair(p, q)
    theta = 1.0 - _inv(q) + _inv(p)
    if theta <= 0.0:
        raise ExcludedPairError(
            "pair (inf, 1) is excluded: the doubling-time exponent vanishes")
    factor = growth_k * math.exp(growth_c)
    lower_c = 2.0 * factor * g_norm
    doubling_time = (4.0 * factor * g_norm ** 2) ** (1.0 / theta)
    lam = math.log(2.0) / doubling_time
    est = RateEstimates(lower_c=lower_c, doubling_time=doubling_time, lam=lam,
                        d_const=2.0 * lower_c, theta=theta)
    if fitted is not None:
        est.alpha_fit, est.beta_fit, est.d_fit = fitted
    return est


def _inv(p):
    return 0.0 if p == math.inf else 1.0 / p


# ---------------------------------------------------------------------------
# full certification
# ---------------------------------------------------------------------------

@dataclass
class ReconstructionConfig:
    window: float = 10.0
    h: float = 0.01
    projection_step: float = 0.5
    projection_margin: float | None = None   # default: decay-margin heuristic
    invariance_tol: float = 1e-6
    idempotency_tol: float = 1e-8
    rank_rel_tol: float = 1e-6
    projection_match_tol: float = 1e-3
    admissibility: AdmissibilityConfig | None = None
    boundary: str = "projected"
    horizon: float | None = None

    def margins(self):
        if self.projection_margin is not None:
            return self.projection_margin
        return max(2.0, min(10.0, 0.35 * self.window))


@dataclass
class CertificationResult:
    certificate: DichotomyCertificate | None
    admissibility: object
    rates: RateEstimates | None
    growth: tuple | None
    projection_norm_bound: float | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.certificate is not None and \
            self.diagnostics.get("certified", False)


def certify_dichotomy(family, norms, p, q, config=None, admissibility=None):
    """Reconstruct projections, rates, and constants; emit a certificate.

    Requires a positive admissibility verdict (computed here unless one is
    passed in).  Projections are assembled on a coarse interior subgrid,
    checked for idempotency, constant rank, flow invariance, and the
    unstable-bundle isomorphism; rates installed in the certificate are the
    fitted ones, with the conservative doubling-time constants reported
    alongside.
    """
    p, q = validate_pair(p, q)
    if p == math.inf and q == 1.0:
        raise ExcludedPairError("reconstruction is not available for (inf, 1)")
    if config is None:
        config = ReconstructionConfig()
    adm_config = config.admissibility or AdmissibilityConfig(
        window=config.window, h=max(config.h, 0.02))
    report = admissibility or check_admissibility(family, norms, p, q, adm_config)
    if report.verdict != "admissible":
        return CertificationResult(
            certificate=None, admissibility=report, rates=None, growth=None,
            projection_norm_bound=None,
            diagnostics={"certified": False,
                         "reason": f"admissibility verdict: {report.verdict}"})

    grid = uniform_grid(-config.window, config.window, config.h)
    growth_k, growth_c = estimate_growth_bound(family, grid, norms)
    g_norm = report.g_norm_estimate
    solver = BoundedSolver(family, norms, grid, boundary=config.boundary,
                           horizon=config.horizon)

    margin = config.margins()
    lo = -config.window + margin
    hi = config.window - 1.0 - margin
    if hi <= lo:
        raise InvalidInputError(
            "window too small for the projection margin; enlarge the window")
    n_proj = max(3, int(round((hi - lo) / config.projection_step)) + 1)
    taus = np.array([_snap(t, grid) for t in np.linspace(lo, hi, n_proj)])

    projections = np.stack([projection_at(solver, t) for t in taus])
    table = _PropagatorTable(grid, solver.system.steps, taus)

    # rank constancy
    ranks = [_rank_of(pmat, config.rank_rel_tol) for pmat in projections]
    rank_constant = len(set(ranks)) == 1
    rank = ranks[0]
    n = family.dim

    idempotency = max(float(np.linalg.norm(pm @ pm - pm, 2))
                      for pm in projections)
    m_bound = projection_bound(g_norm, growth_k, growth_c)
    measured_p_norm = max(
        family_operator_norm(norms, t, t, pm)
        for t, pm in zip(taus, projections))

    # invariance on sampled pairs
    invariance = 0.0
    invariance_witnesses = []
    for i in range(len(taus)):
        for j in range(i + 1, len(taus), max(1, (len(taus) - i) // 4)):
            prop = table.between(i, j)
            res = float(np.linalg.norm(
                projections[j] @ prop - prop @ projections[i], 2))
            invariance = max(invariance, res)
            if res > config.invariance_tol:
                invariance_witnesses.append((float(taus[i]), float(taus[j]), res))

    cert_draft = DichotomyCertificate(
        taus, projections, alpha=1.0, beta=1.0, constant=1.0, family=family,
        norms=norms, note=_FINITE_WINDOW_NOTE)

    # unstable isomorphism round-trip
    roundtrip = 0.0
    if rank < n:
        for i in range(len(taus) - 1):
            basis = cert_draft.unstable_basis(i)
            prop = table.between(i, i + 1)
            image = prop @ basis
            q_hi = np.eye(n) - projections[i + 1]
            back = basis @ np.linalg.pinv(prop @ basis) @ q_hi
            recovered = back @ image
            roundtrip = max(roundtrip, float(np.linalg.norm(
                recovered - basis @ (basis.T @ recovered), 2)) +
                float(np.linalg.norm((prop @ recovered) - image, 2)))

    alpha_fit, d_stable = _fit_stable_rate(norms, cert_draft, taus, table)
    beta_fit, d_unstable = _fit_unstable_rate(norms, cert_draft, taus, table)
    d_hat = max(d_stable, d_unstable, 1.0)

    rates = doubling_time_and_rates(
        g_norm, growth_k, growth_c, p, q,
        fitted=(alpha_fit, beta_fit, d_hat))

    certificate = DichotomyCertificate(
        taus, projections,
        alpha=alpha_fit if alpha_fit is not None else rates.lam,
        beta=beta_fit if beta_fit is not None else rates.lam,
        constant=d_hat, family=family, norms=norms, note=_FINITE_WINDOW_NOTE)

    certified = (rank_constant
                 and idempotency <= config.idempotency_tol
                 and invariance <= config.invariance_tol
                 and measured_p_norm <= m_bound * (1.0 + 1e-6))
    diagnostics = {
        "certified": certified,
        "rank": rank,
        "rank_constant": rank_constant,
        "idempotency": idempotency,
        "invariance_residual": invariance,
        "invariance_witnesses": invariance_witnesses,
        "unstable_roundtrip": roundtrip,
        "measured_projection_norm": measured_p_norm,
        "projection_norm_bound": m_bound,
        "unstable_vacuous": rank == n,
        "stable_vacuous": rank == 0,
        "note": _FINITE_WINDOW_NOTE,
    }
    return CertificationResult(
        certificate=certificate, admissibility=report, rates=rates,
        growth=(growth_k, growth_c), projection_norm_bound=m_bound,
        diagnostics=diagnostics)


class _PropagatorTable:
    """Propagators between certification nodes composed from grid cells.

    Keeps certification O(window/h) even for integrated families: the cell
    propagators are integrated once and long-span propagators come from the
    cocycle composition (consistent with the direct integration within the
    cocycle tolerance).
    """

    def __init__(self, grid, steps, taus):
        self.indices = [int(np.argmin(np.abs(grid - t))) for t in taus]
        self.adjacent = []
        n = steps.shape[1]
        for k in range(len(taus) - 1):
            prod = np.eye(n)
            for c in range(self.indices[k], self.indices[k + 1]):
                prod = steps[c] @ prod
            self.adjacent.append(prod)
        self._memo = {}

    def between(self, i, j):
        """T(tau_j, tau_i) for j >= i."""
        if j == i:
            return np.eye(self.adjacent[0].shape[0]) if self.adjacent else None
        key = (i, j)
        hit = self._memo.get(key)
        if hit is None:
            hit = self.adjacent[j - 1] @ self.between(i, j - 1) if j - i > 1 \
                else self.adjacent[i]
            self._memo[key] = hit
        return hit


def _snap(t, grid):
    return float(grid[int(np.argmin(np.abs(grid - t)))])


def _rank_of(p, rel_tol):
    s = np.linalg.svd(p, compute_uv=False)
    if s[0] <= 1e-10:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def _span_offsets(n_taus):
    """Node offsets on the certification grid used for the rate fits."""
    offsets = [k for k in (1, 2, 4, 8, 16) if k < n_taus]
    return offsets if len(offsets) >= 2 else [1, n_taus - 1]


def _fit_stable_rate(norms, cert, taus, table):
    """Log-linear fit of max_tau ||T(tau+s, tau) P(tau)|| against s."""
    if cert.stable_rank == 0:
        return None, 0.0
    logs, xs = [], []
    for k in _span_offsets(len(taus)):
        vals = []
        for i in range(len(taus) - k):
            prop = table.between(i, i + k)
            vals.append(family_operator_norm(norms, taus[i + k], taus[i],
                                             prop @ cert.projections[i]))
        if vals:
            xs.append(taus[k] - taus[0])
            logs.append(math.log(max(max(vals), 1e-300)))
    if len(xs) < 2:
        return None, 0.0
    coef = np.polyfit(xs, logs, 1)
    alpha = -float(coef[0])
    d = float(np.exp(np.max(np.asarray(logs) + alpha * np.asarray(xs))))
    return alpha, d


def _fit_unstable_rate(norms, cert, taus, table):
    """Fit of the lower expansion bound min over the unstable bundle."""
    n = cert.dim
    if cert.stable_rank == n:
        return None, 0.0
    logs, xs = [], []
    for k in _span_offsets(len(taus)):
        vals = []
        for i in range(len(taus) - k):
            basis = cert.unstable_basis(i)
            prop = table.between(i, i + k)
            lower = _restricted_lower_bound(norms, taus[i + k], taus[i],
                                            prop, basis)
            vals.append(lower)
        if vals:
            xs.append(taus[k] - taus[0])
            logs.append(math.log(max(min(vals), 1e-300)))
    if len(xs) < 2:
        return None, 0.0
    coef = np.polyfit(xs, logs, 1)
    beta = float(coef[0])
    # covering D with ||T Q x|| >= (1/D) e^{beta s} ||Q x||
    d = float(np.exp(np.max(beta * np.asarray(xs) - np.asarray(logs))))
    return beta, max(d, 1.0)


def _restricted_lower_bound(norms, t_out, t_in, prop, basis):
    """min over unit u of ||prop basis u||_{t_out} / ||basis u||_{t_in}."""
    if basis.shape[1] == 0:
        return math.inf
    w_out = norms.weight_matrix(t_out)
    w_in = norms.weight_matrix(t_in)
    if w_out is not None and w_in is not None:
        num = w_out @ prop @ basis
        den = w_in @ basis
        q_den, r_den = np.linalg.qr(den)
        return float(np.linalg.svd(num @ np.linalg.inv(r_den),
                                   compute_uv=False)[-1])
    best = math.inf
    dirs = np.random.default_rng(3).standard_normal((16, basis.shape[1]))
    for u in dirs / np.linalg.norm(dirs, axis=1, keepdims=True):
        vec = basis @ u
        den = norms.norm(t_in, vec)
        if den > 0:
            best = min(best, norms.norm(t_out, prop @ vec) / den)
    return best
