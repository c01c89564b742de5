"""Mechanical evaluation of the convergence-theorem hypotheses and rates.

Each checker turns a (problem constants, stepsize, schedule) triple into a
:class:`TheoremReport`: named condition residuals (each <= 0 means the
condition holds), the derived constants of the statement, and, when the
conditions are satisfied and the initial distances are supplied, the
theoretical rate envelope K -> bound.

Also houses the linear weak-MVI certifier: for F(z) = Mz the inequality
<Fz, z - z*> >= rho ||Fz||^2 holds for all z exactly when
(M + M^T)/2 - rho M^T M is positive semidefinite (and the negative variant
with the reversed sign).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algorithms import PdhgConfig
from .numerics import sym_eigvals_jacobi
from .schedules import Schedule


@dataclass
class TheoremReport:
    """Evaluated hypotheses of one convergence theorem.

    ``residuals`` maps condition name to a real; the condition holds when the
    value is <= 0, and ``satisfied`` is True exactly when all of them hold.
    ``rate_envelope`` maps horizon K to the theoretical bound, present only
    when the conditions hold and the initial distances were supplied.
    """

    theorem: str
    residuals: dict[str, float]
    satisfied: bool
    derived: dict[str, float]
    rate_envelope: dict[int, float] | None = None
    metric: str | None = None
    notes: tuple[str, ...] = ()
    envelope_fn: object = field(default=None, repr=False, compare=False)
    schedule: Schedule | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {
            "theorem": self.theorem,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "satisfied": bool(self.satisfied),
            "derived": {k: float(v) for k, v in self.derived.items()},
            "metric": self.metric,
            "notes": list(self.notes),
        }
        if self.rate_envelope is not None:
            out["rate_envelope"] = {str(k): float(v) for k, v in self.rate_envelope.items()}
        return out


def _check_gamma(l_f: float, rho: float | None, gamma: float) -> None:
    if gamma <= 0 or (l_f > 0 and gamma >= 1.0 / l_f):
        raise ValueError(f"gamma={gamma} outside the admissible interval (0, 1/L_F) with L_F={l_f}")
    if rho is not None and gamma <= max(0.0, -2.0 * rho):
        raise ValueError(f"gamma={gamma} must exceed max(0, -2 rho) = {max(0.0, -2.0 * rho)}")


def _sums(schedule: Schedule, k_max: int) -> tuple[float, float]:
    a = schedule.alpha_array(np.arange(k_max + 1))
    return float(a.sum()), float((a * a).sum())


def _mk_report(theorem, residuals, derived, *, metric, schedule, envelope_fn, k_max, notes=()):
    satisfied = all(v <= 0.0 for v in residuals.values())
    env_map = None
    fn = None
    if satisfied and envelope_fn is not None:
        fn = envelope_fn
        env_map = {int(k_max): float(envelope_fn(k_max))}
    return TheoremReport(
        theorem=theorem,
        residuals=residuals,
        satisfied=satisfied,
        derived=derived,
        rate_envelope=env_map,
        metric=metric,
        notes=tuple(notes),
        envelope_fn=fn,
        schedule=schedule,
    )


def check_thm_bcsegplus_rate(
    l_f: float,
    l_f_hat: float,
    sigma_f: float,
    rho: float | None,
    gamma: float,
    schedule: Schedule,
    k_max: int,
    *,
    dist0_sq: float | None = None,
) -> TheoremReport:
    """Random-iterate rate of the unconstrained bias-corrected scheme.

    Condition (with b = 2 gamma^2 L_F^2 / (1 - gamma^2 L_F^2) fixed):

        2 gamma L_Fhat sqrt(alpha0)
        + (1 + (1+b) gamma^2 L_F^2 gamma^2 L_Fhat^2) alpha0  <=  1 + 2 rho / gamma

    and, when satisfied, the envelope bounding the alpha-weighted average of
    E||F z^k||^2 over k in {0..K}.
    """
    if l_f_hat <= 0:
        raise ValueError("l_f_hat must be positive")
    alpha0 = schedule.first()
    notes = []
    if rho is None:
        lhs = _bcsegplus_lhs(l_f, l_f_hat, gamma, alpha0)
        rho_required = gamma * (lhs - 1.0) / 2.0
        return TheoremReport(
            theorem="bc-seg+-rate",
            residuals={},
            satisfied=True,
            derived={"alpha0": alpha0, "rho_required": rho_required},
            metric="grad_norm_sq",
            notes=("rho unknown; condition assumed to hold for rho > max(rho_required, -gamma/2)",),
            schedule=schedule,
        )
    _check_gamma(l_f, rho, gamma)
    b = 2.0 * gamma**2 * l_f**2 / (1.0 - gamma**2 * l_f**2)
    lhs = _bcsegplus_lhs(l_f, l_f_hat, gamma, alpha0)
    residual = lhs - (1.0 + 2.0 * rho / gamma)
    mu = gamma**2 * (1.0 - gamma**2 * l_f**2) / 2.0
    eta = 0.5 * (1.0 + b) * gamma**2 * l_f**2 + 1.0 / (gamma * l_f_hat * math.sqrt(alpha0))
    c = 1.0 + 2.0 * eta * ((gamma**2 * l_f_hat**2 + 1.0) + 2.0 * alpha0)
    derived = {"b": b, "mu": mu, "eta": eta, "C": c, "alpha0": alpha0}

    envelope_fn = None
    if dist0_sq is not None:

        def envelope_fn(k, _d=dist0_sq, _mu=mu, _eta=eta, _c=c):
            s1, s2 = _sums(schedule, int(k))
            num = (1.0 + _eta * gamma**2 * l_f**2) * _d + _c * sigma_f**2 * gamma**2 * s2
            return num / (_mu * s1)

    return _mk_report(
        "bc-seg+-rate",
        {"stepsize_condition": residual},
        derived,
        metric="grad_norm_sq",
        schedule=schedule,
        envelope_fn=envelope_fn,
        k_max=k_max,
        notes=notes,
    )


def _bcsegplus_lhs(l_f, l_f_hat, gamma, alpha0):
    b = 2.0 * gamma**2 * l_f**2 / (1.0 - gamma**2 * l_f**2)
    coef = 1.0 + ((1.0 + b) * gamma**2 * l_f**2) * gamma**2 * l_f_hat**2
    return 2.0 * gamma * l_f_hat * math.sqrt(alpha0) + coef * alpha0


def _as_lhs(l_f, l_f_hat, gamma, k, r):
    """Left side of the almost-sure stepsize requirement at alpha_k = 1/(k+r)."""
    k = np.asarray(k, dtype=float)
    a_k = 1.0 / (k + r)
    a_k1 = 1.0 / (k + 1.0 + r)
    one_plus_b = (1.0 + gamma**2 * l_f**2) / (1.0 - gamma**2 * l_f**2)
    coef = one_plus_b * gamma**4 * l_f**2 * l_f_hat**2
    return (gamma * l_f_hat + 1.0) * a_k + 2.0 * (coef * a_k1 + gamma * l_f_hat) * (a_k1 + 1.0) * a_k1


def check_thm_bcsegplus_as(
    l_f: float,
    l_f_hat: float,
    rho: float,
    gamma: float,
    r: int,
    *,
    scan_k: int = 10**6,
    r_max: int = 10**9,
) -> TheoremReport:
    """Almost-sure-convergence stepsize requirement at alpha_k = 1/(k+r).

    The left side is evaluated at k = 0, its worst case (nonincreasing in k,
    confirmed by a vectorised scan), and the report carries the minimal r
    that makes it hold, found by exponential search; no r <= r_max means the
    requirement is unsatisfiable at this (gamma, rho).
    """
    if r < 1:
        raise ValueError("r must be a positive integer")
    _check_gamma(l_f, rho, gamma)
    rhs = 1.0 + 2.0 * rho / gamma

    grid = np.unique(np.minimum(np.round(np.geomspace(1, scan_k + 1, 4096)).astype(np.int64) - 1, scan_k))
    lhs_grid = _as_lhs(l_f, l_f_hat, gamma, grid, r)
    monotone = bool(np.all(np.diff(lhs_grid) <= 1e-15))

    lhs0 = float(_as_lhs(l_f, l_f_hat, gamma, 0, r))
    residual = lhs0 - rhs

    min_r = None
    if float(_as_lhs(l_f, l_f_hat, gamma, 0, r_max)) <= rhs:
        lo, hi = 1, 1
        while float(_as_lhs(l_f, l_f_hat, gamma, 0, hi)) > rhs:
            lo, hi = hi, min(hi * 2, r_max)
        while lo < hi:
            mid = (lo + hi) // 2
            if float(_as_lhs(l_f, l_f_hat, gamma, 0, mid)) <= rhs:
                hi = mid
            else:
                lo = mid + 1
        min_r = int(hi)

    derived = {"lhs_at_k0": lhs0, "rhs": rhs}
    if min_r is not None:
        derived["min_r"] = float(min_r)
    notes = [] if monotone else ["left side not confirmed nonincreasing over the scanned k grid"]
    if min_r is None:
        notes.append(f"no r <= {r_max} satisfies the requirement")
    report = _mk_report(
        "bc-seg+-almost-sure",
        {"stepsize_requirement": residual},
        derived,
        metric=None,
        schedule=Schedule.robbins_monro(max(r, 2)),
        envelope_fn=None,
        k_max=0,
        notes=notes,
    )
    if min_r is None:
        report.satisfied = False
    return report


def check_thm_const(
    l_f: float,
    l_f_hat: float,
    sigma_f: float,
    rho: float | None,
    gamma: float,
    alpha0: float,
    k_max: int,
    *,
    schedule: Schedule | None = None,
    dist0_sq: float | None = None,
    h_gap_sq: float = 0.0,
) -> TheoremReport:
    """Constrained-case condition mu > 0 and its rate envelope.

    mu  = (1 - sqrt(alpha0)) / (1 + sqrt(alpha0))
          - alpha0 (1 + 2 gamma^2 L_Fhat^2 eta) + 2 rho / gamma,
    eta = 1 / (sqrt(alpha0) (1 - gamma L_F)^2) + (1 - sqrt(alpha0)) / sqrt(alpha0).

    The envelope bounds the weighted average of E[dist(0, T zbar^k)^2],
    measured through the surrogate ||h^k - H zbar^k||^2 / gamma^2.
    """
    if not 0 < alpha0 < 1:
        raise ValueError("alpha0 must lie in (0, 1)")
    sa = math.sqrt(alpha0)
    eta = 1.0 / (sa * (1.0 - gamma * l_f) ** 2) + (1.0 - sa) / sa
    if rho is None:
        lhs = alpha0 * (1.0 + 2.0 * gamma**2 * l_f_hat**2 * eta) - (1.0 - sa) / (1.0 + sa)
        return TheoremReport(
            theorem="bc-pseg+-rate",
            residuals={},
            satisfied=True,
            derived={"eta": eta, "alpha0": alpha0, "rho_required": gamma * lhs / 2.0},
            metric="tz_dist_sq",
            notes=("rho unknown; condition assumed to hold for rho > max(rho_required, -gamma/2)",),
            schedule=schedule or Schedule.constant(alpha0),
        )
    _check_gamma(l_f, rho, gamma)
    mu = (1.0 - sa) / (1.0 + sa) - alpha0 * (1.0 + 2.0 * gamma**2 * l_f_hat**2 * eta) + 2.0 * rho / gamma
    c = 1.0 + 2.0 * eta * (1.0 + gamma**2 * l_f_hat**2) + 2.0 * alpha0 * eta
    derived = {"mu": mu, "eta": eta, "C": c, "alpha0": alpha0, "b": sa, "epsilon": 1.0 / (sa * (1.0 - gamma * l_f) ** 2)}
    schedule = schedule or Schedule.constant(alpha0)

    envelope_fn = None
    if dist0_sq is not None:

        def envelope_fn(k, _d=dist0_sq, _h=h_gap_sq, _mu=mu, _eta=eta, _c=c):
            s1, s2 = _sums(schedule, int(k))
            num = _d + _eta * _h + _c * gamma**2 * sigma_f**2 * s2
            return num / (gamma**2 * _mu * s1)

    return _mk_report(
        "bc-pseg+-rate",
        {"mu_positive": -mu},
        derived,
        metric="tz_dist_sq",
        schedule=schedule,
        envelope_fn=envelope_fn,
        k_max=k_max,
    )


def pdhg_constants(cfg: PdhgConfig) -> dict[str, float]:
    """The derived constants c1_hat, c2_hat, c3_hat, L_M of the primal-dual
    theorem under identity D-scalings."""
    if cfg.lips is None:
        raise ValueError("PdhgConfig has no Lipschitz table attached")
    l = cfg.lips
    theta = cfg.theta
    ng, ng1, ng2 = cfg.norm_gamma, cfg.norm_gamma1, cfg.norm_gamma2
    c1 = l.l_xz_hat**2 * ng + 2.0 * (1.0 - theta) ** 2 * l.l_yz_hat**2 * ng + 2.0 * theta**2 * l.l_yy_hat**2 * ng2
    c2 = 2.0 * theta**2 * l.l_yx_hat**2 * ng1
    c3 = l.l_xz_hat**2 * ng
    l_m = math.sqrt(max(l.l_xx**2 * ng1 + l.l_yx**2 * ng1, l.l_xy**2 * ng2 + l.l_yy**2 * ng2))
    return {"c1_hat": c1, "c2_hat": c2, "c3_hat": c3, "L_M": l_m}


def check_thm_pdhg(
    cfg: PdhgConfig,
    rho: float | None,
    alpha0: float,
    k_max: int,
    *,
    sigma_f: float = 0.0,
    schedule: Schedule | None = None,
    dist0_sq: float | None = None,
    init_gap_sq: float = 0.0,
) -> TheoremReport:
    """Conditions and envelope of the preconditioned primal-dual theorem.

    ``sigma_f`` is the Gamma-weighted noise constant, ``dist0_sq`` the
    Gamma^{-1}-weighted initial distance, ``init_gap_sq`` the Gamma-weighted
    initial memory gap.  The envelope bounds the weighted average of
    E[dist_Gamma(0, T zbar^k)^2].
    """
    if not 0 < alpha0 < 1:
        raise ValueError("alpha0 must lie in (0, 1)")
    consts = pdhg_constants(cfg)
    c1, c2, c3, l_m = consts["c1_hat"], consts["c2_hat"], consts["c3_hat"], consts["L_M"]
    bar_gamma = cfg.bar_gamma
    theta = cfg.theta
    big_theta = (1.0 - theta) ** 2 + 2.0 * theta**2
    sa = math.sqrt(alpha0)

    residuals = {"c2_stepsize": 4.0 * c2 * alpha0 - 1.0, "contraction_modulus": l_m - 1.0}
    derived = dict(consts)
    derived.update({"bar_gamma": bar_gamma, "Theta": big_theta, "alpha0": alpha0})

    eta_inner = None
    if l_m < 1.0 and residuals["c2_stepsize"] < 0.0:
        eta_inner = 1.0 / (sa * (1.0 - l_m) ** 2) + (1.0 - sa) / sa
        eta = (1.0 + 4.0 * c2 * alpha0**2) * eta_inner / (1.0 - 4.0 * c2 * alpha0)
        derived["eta"] = eta
        c = 2.0 * (eta + alpha0 * eta_inner) * (1.0 + 2.0 * c2) + 1.0 + 2.0 * (c1 + 2.0 * c2 * (big_theta + c3)) * eta
        derived["C"] = c
    if rho is None:
        notes = ("rho unknown; mu not evaluated, assumed positive for rho close enough to 0",)
        return TheoremReport(
            theorem="np-pdeg-rate",
            residuals=residuals,
            satisfied=all(v <= 0 for v in residuals.values()),
            derived=derived,
            metric="tz_dist_sq",
            notes=notes,
            schedule=schedule or Schedule.constant(alpha0),
        )
    if eta_inner is None:
        residuals["mu_positive"] = float("inf")
        return _mk_report("np-pdeg-rate", residuals, derived, metric="tz_dist_sq",
                          schedule=schedule or Schedule.constant(alpha0), envelope_fn=None, k_max=k_max)

    eta = derived["eta"]
    c = derived["C"]
    mu = (1.0 - sa) / (1.0 + sa) + 2.0 * rho / bar_gamma - alpha0 - 2.0 * alpha0 * (c1 + 2.0 * c2 * (1.0 + c3)) * eta
    residuals["mu_positive"] = -mu
    derived["mu"] = mu
    schedule = schedule or Schedule.constant(alpha0)

    envelope_fn = None
    if dist0_sq is not None:

        def envelope_fn(k, _d=dist0_sq, _h=init_gap_sq, _mu=mu, _eta=eta, _c=c):
            s1, s2 = _sums(schedule, int(k))
            return (_d + _eta * _h + _c * sigma_f**2 * s2) / (_mu * s1)

    return _mk_report(
        "np-pdeg-rate",
        residuals,
        derived,
        metric="tz_dist_sq",
        schedule=schedule,
        envelope_fn=envelope_fn,
        k_max=k_max,
    )


def check_seg_plus_affine(
    l_f: float,
    sigma_f: float,
    rho: float,
    gamma: float,
    schedule: Schedule,
    k_max: int,
    *,
    dist0_sq: float | None = None,
) -> TheoremReport:
    """Stepsize rule rho >= gamma (alpha_k - 1)/2 of the affine-operator
    result for the uncorrected scheme, plus its envelope."""
    if gamma <= 0 or (l_f > 0 and gamma >= 1.0 / l_f):
        raise ValueError(f"gamma={gamma} outside (0, 1/L_F) with L_F={l_f}")
    alpha0 = schedule.first()  # schedules are nonincreasing, k = 0 is the max
    residual = gamma * (alpha0 - 1.0) / 2.0 - rho
    derived = {"alpha0": alpha0, "mu": gamma**2 * (1.0 - gamma**2 * l_f**2)}

    envelope_fn = None
    if dist0_sq is not None:

        def envelope_fn(k, _d=dist0_sq):
            s1, s2 = _sums(schedule, int(k))
            num = _d + gamma**2 * (gamma**2 * l_f**2 + 1.0) * sigma_f**2 * s2
            return num / (gamma**2 * (1.0 - gamma**2 * l_f**2) * s1)

    return _mk_report(
        "seg+-affine",
        {"stepsize_rule": residual},
        derived,
        metric="grad_norm_sq",
        schedule=schedule,
        envelope_fn=envelope_fn,
        k_max=k_max,
    )


# ---------------------------------------------------------------------------
# Deterministic limits of the stochastic conditions.
# ---------------------------------------------------------------------------


def alpha0_limit_margin(
    theorem: str,
    *,
    l_f: float | None = None,
    l_f_hat: float | None = None,
    rho: float,
    gamma: float | None = None,
    cfg: PdhgConfig | None = None,
    alpha0: float = 1e-8,
) -> float:
    """Numerical alpha0 -> 0 limit of a checker's condition margin.

    The margins behave like limit - O(sqrt(alpha0)); evaluating at alpha0 and
    alpha0/4 and extrapolating linearly in sqrt(alpha0) removes the leading
    term, leaving an O(alpha0) error.  The limit equals the deterministic
    threshold 1 + 2 rho / gamma (with the smallest stepsize eigenvalue in the
    preconditioned case).
    """

    def margin(a0: float) -> float:
        if theorem == "bc-seg+-rate":
            return (1.0 + 2.0 * rho / gamma) - _bcsegplus_lhs(l_f, l_f_hat, gamma, a0)
        if theorem == "bc-seg+-almost-sure":
            r = max(int(round(1.0 / a0)), 2)
            return (1.0 + 2.0 * rho / gamma) - float(_as_lhs(l_f, l_f_hat, gamma, 0, r))
        if theorem == "bc-pseg+-rate":
            rep = check_thm_const(l_f, l_f_hat, 0.0, rho, gamma, a0, 1)
            return rep.derived["mu"]  # mu -> 1 + 2 rho / gamma
        if theorem == "np-pdeg-rate":
            rep = check_thm_pdhg(cfg, rho, a0, 1)
            return rep.derived["mu"]  # mu -> 1 + 2 rho / bar_gamma
        if theorem == "seg+-affine":
            return (1.0 + 2.0 * rho / gamma) - a0
        raise ValueError(f"unknown theorem {theorem!r}")

    m1 = margin(alpha0)
    m2 = margin(alpha0 / 4.0)
    return 2.0 * m2 - m1


# ---------------------------------------------------------------------------
# Weak-MVI certification for linear operators.
# ---------------------------------------------------------------------------


def certify_weak_mvi_linear(m, rho: float, *, negative: bool = False, tol: float = 1e-10) -> bool:
    """Certify <Mz, z - z*> >= rho ||Mz||^2 globally (z* any zero of M).

    Positive semidefiniteness of (M + M^T)/2 - rho M^T M is checked through
    the smallest eigenvalue with tolerance ``tol``.  With ``negative=True``
    the mirrored condition <Mz, z - z*> <= rho ||Mz||^2 is certified instead
    (matrix negative semidefinite).
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("M must be a square matrix")
    s = 0.5 * (m + m.T) - rho * (m.T @ m)
    eig = sym_eigvals_jacobi(s)
    if negative:
        return bool(eig[-1] <= tol)
    return bool(eig[0] >= -tol)


def certified_rho_upper(m, *, lo: float = -1e6, hi: float = 1e6, iters: int = 200) -> float:
    """Largest rho certified by the linear weak-MVI test, by bisection.

    The certified set is a half line (-inf, rho_max] because M^T M is
    positive semidefinite, so bisection applies.
    """
    if not certify_weak_mvi_linear(m, lo):
        raise ValueError("weak MVI refused even at the lower bracket")
    if certify_weak_mvi_linear(m, hi):
        return float("inf")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if certify_weak_mvi_linear(m, mid):
            lo = mid
        else:
            hi = mid
    return lo


def weak_mvi_rho_range(m) -> tuple[float, float, bool]:
    """Admissible weak-MVI range (-1/(2L), rho_max] of a linear operator and
    whether it is nonempty."""
    m = np.asarray(m, dtype=float)
    l = math.sqrt(float(sym_eigvals_jacobi(m.T @ m)[-1]))
    lo = -1.0 / (2.0 * l)
    hi = certified_rho_upper(m)
    return lo, hi, hi > lo


# ---------------------------------------------------------------------------
# Empirical weighted averages against the theoretical envelope.
# ---------------------------------------------------------------------------


def empirical_rate_vs_envelope(trajectories, report: TheoremReport, ks=None) -> dict:
    """Compare the seed-averaged, alpha-weighted metric with the envelope.

    Returns {"claimed": bool, "comparisons": {K: {...}}}; when the report's
    conditions are not satisfied the comparison is marked not claimed and no
    bound is asserted.
    """
    if not trajectories:
        raise ValueError("no trajectories supplied")
    if not report.satisfied or report.envelope_fn is None:
        return {"claimed": False, "comparisons": {}}
    if ks is None:
        ks = sorted(report.rate_envelope or [])
    metric = report.metric
    arrays = []
    for t in trajectories:
        if metric not in t.metrics:
            raise ValueError(f"trajectory of {t.algorithm!r} lacks metric {metric!r}")
        arrays.append(t.metrics[metric])
    min_len = min(len(a) for a in arrays)
    stacked = np.stack([a[:min_len] for a in arrays])
    mean_k = np.nanmean(stacked, axis=0)

    out = {}
    for k in ks:
        k = int(k)
        if k + 1 > min_len:
            raise ValueError(f"trajectories too short for K={k}")
        w = report.schedule.alpha_array(np.arange(k + 1))
        empirical = float(np.sum(w * mean_k[: k + 1]) / np.sum(w))
        bound = float(report.envelope_fn(k))
        out[k] = {"empirical": empirical, "envelope": bound, "within": empirical <= bound}
    return {"claimed": True, "comparisons": out}
