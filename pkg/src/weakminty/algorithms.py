"""Iteration schemes for the inclusion 0 in Az + Fz under weak MVI.

Implemented schemes, selected by string identifier:

========  =============================================================
eg+       deterministic extragradient with a damped second step
sf-eg+    eg+ driven by the stochastic oracle, constant second stepsize
seg       stochastic extragradient, both stepsizes diminishing
seg+      stochastic extragradient keeping the first stepsize constant
bc-seg+   bias-corrected seg+ (unconstrained)
ceg+      deterministic resolvent scheme built on H = id - gamma F
pseg      projected seg (resolvent on both steps, diminishing stepsizes)
p1seg+    projected seg+ with a single resolvent application
p2seg+    projected seg+ with two resolvent applications (Mirror-Prox style)
sf-peg+   p2seg+ with a constant second stepsize
bc-pseg+  bias-corrected projected scheme with the h-memory
np-pdeg   nonlinearly preconditioned primal-dual extragradient
========  =============================================================

All update kernels broadcast over a leading batch axis, so a batch of seeds
advances in lockstep while each seed sees exactly the noise stream it would
see when run alone.  One solver step of the bias-corrected schemes draws
exactly two tickets (np-pdeg draws three when theta != 0); the ticket drawn
while initialising the memory is counter 0 of the stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .numerics import sym_eigvals_jacobi
from .oracles import SampleTicket, eval_at
from .problems import Problem
from .schedules import Schedule

ALGORITHMS = (
    "eg+",
    "seg",
    "seg+",
    "sf-eg+",
    "pseg",
    "p1seg+",
    "p2seg+",
    "sf-peg+",
    "ceg+",
    "bc-seg+",
    "bc-pseg+",
    "np-pdeg",
)

# Pairing rules: which methods insist on an unconstrained problem and which
# cannot run without a resolvent.  The remaining ones (ceg+, bc-pseg+,
# np-pdeg) accept both, with the resolvent defaulting to the identity.
UNCONSTRAINED_ONLY = frozenset({"eg+", "seg", "seg+", "sf-eg+", "bc-seg+"})
RESOLVENT_REQUIRED = frozenset({"pseg", "p1seg+", "p2seg+", "sf-peg+"})
CONSTANT_STEP_ONLY = frozenset({"sf-eg+", "sf-peg+"})

#: Hard divergence guard: a trajectory is truncated and flagged once ||z||
#: exceeds this value.
DIVERGENCE_GUARD = 1e12
#: Terminal classification: converged when the tail of the primary metric
#: (||Fz|| or the natural residual) falls below this, diverged when the tail
#: exceeds the initial value by this factor.
CONVERGED_TOL = 1e-2
DIVERGED_FACTOR = 2.0


@dataclass(frozen=True)
class PdhgLipschitz:
    """Scalar Lipschitz table of the primal-dual scheme (D-scalings identity).

    The first four constants bound the deterministic gradients, the hatted
    ones the mean-square moduli of the stochastic gradients.
    """

    l_xx: float = 0.0
    l_xy: float = 0.0
    l_yx: float = 0.0
    l_yy: float = 0.0
    l_xz_hat: float = 0.0
    l_yz_hat: float = 0.0
    l_yx_hat: float = 0.0
    l_yy_hat: float = 0.0


def pdhg_table_from_scalars(l_f: float, l_f_hat: float, gamma: float) -> PdhgLipschitz:
    """Collapse an (L_F, L_Fhat) pair into the scalar table for Gamma = gamma I.

    Places the full mean-square modulus in the x-gradient slot and splits L_F
    over the two diagonal slots, so the derived constants of the primal-dual
    checker coincide with the plain constrained-case checker.
    """
    if not 0 < gamma:
        raise ValueError("gamma must be positive")
    return PdhgLipschitz(
        l_xx=math.sqrt(gamma) * l_f,
        l_yy=math.sqrt(gamma) * l_f,
        l_xz_hat=math.sqrt(gamma) * l_f_hat,
    )


@dataclass(frozen=True)
class PdhgConfig:
    """Stepsize blocks, coupling parameter theta and Lipschitz table.

    ``gamma1`` / ``gamma2`` are symmetric positive definite matrices acting on
    the primal and dual block.  ``theta = 0`` decouples the two gradient
    steps; ``theta = 1`` gives Gauss-Seidel updates.  When a Lipschitz table
    is attached the stepsize condition

        (L_xx^2 + L_yx^2) ||Gamma1|| < 1  and  (L_xy^2 + L_yy^2) ||Gamma2|| < 1

    is enforced at construction.
    """

    gamma1: np.ndarray
    gamma2: np.ndarray
    theta: float = 0.0
    lips: PdhgLipschitz | None = None

    def __post_init__(self):
        for name in ("gamma1", "gamma2"):
            g = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if g.shape[0] != g.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.allclose(g, g.T, atol=1e-12 * max(1.0, np.abs(g).max())):
                raise ValueError(f"{name} must be symmetric")
            if sym_eigvals_jacobi(g)[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
            g.setflags(write=False)
            object.__setattr__(self, name, g)
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.lips is not None:
            l = self.lips
            if (l.l_xx**2 + l.l_yx**2) * self.norm_gamma1 >= 1.0:
                raise ValueError("stepsize condition violated on the primal block")
            if (l.l_xy**2 + l.l_yy**2) * self.norm_gamma2 >= 1.0:
                raise ValueError("stepsize condition violated on the dual block")

    @classmethod
    def scalar(cls, gamma: float, theta: float, dim_x: int, dim_y: int, lips: PdhgLipschitz | None = None) -> "PdhgConfig":
        return cls(gamma1=gamma * np.eye(dim_x), gamma2=gamma * np.eye(dim_y), theta=theta, lips=lips)

    @property
    def dim_x(self) -> int:
        return self.gamma1.shape[0]

    @property
    def dim_y(self) -> int:
        return self.gamma2.shape[0]

    @property
    def bar_gamma(self) -> float:
        """Smallest eigenvalue of blockdiag(Gamma1, Gamma2)."""
        return min(float(sym_eigvals_jacobi(self.gamma1)[0]), float(sym_eigvals_jacobi(self.gamma2)[0]))

    @property
    def norm_gamma1(self) -> float:
        return float(sym_eigvals_jacobi(self.gamma1)[-1])

    @property
    def norm_gamma2(self) -> float:
        return float(sym_eigvals_jacobi(self.gamma2)[-1])

    @property
    def norm_gamma(self) -> float:
        return max(self.norm_gamma1, self.norm_gamma2)


@dataclass(frozen=True)
class AlgorithmSpec:
    """Algorithm identifier plus its stepsize parameters."""

    name: str
    gamma: float
    pdhg: PdhgConfig | None = None

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.name!r}; known: {ALGORITHMS}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class SolverState:
    """Iterate bundle of a single run: current point, algorithm memory, the
    iteration counter and the RNG position (seed, draw counter)."""

    z: np.ndarray
    memory: dict
    k: int = 0
    counter: int = 0
    seed: int = 0


def _resolve(problem: Problem, v: np.ndarray, step) -> np.ndarray:
    if problem.resolvent is None:
        return v
    return problem.resolvent(v, step)


def _ticket(seed, counter: int) -> SampleTicket:
    return SampleTicket(seed, counter)


# ---------------------------------------------------------------------------
# Step kernels.  Arrays have shape (..., n); alpha/beta are scalars; seed is
# an int or an array broadcasting over the leading axes; counter is the draw
# position before the step.  Each kernel returns the new iterate, the new
# memory, the new counter and an info dict carrying the exploration point.
# ---------------------------------------------------------------------------


def _k_eg_plus(problem, gamma, alpha, z, mem, seed, counter):
    zbar = z - gamma * problem.f(z)
    z_new = z - alpha * gamma * problem.f(zbar)
    return z_new, mem, counter, {"zbar": zbar}


def _k_seg(problem, gamma, alpha, beta, z, mem, seed, counter):
    f1 = eval_at(problem.oracle, _ticket(seed, counter), z)
    zbar = z - beta * gamma * f1
    f2 = eval_at(problem.oracle, _ticket(seed, counter + 1), zbar)
    return z - alpha * gamma * f2, mem, counter + 2, {"zbar": zbar}


def _k_seg_plus(problem, gamma, alpha, z, mem, seed, counter):
    f1 = eval_at(problem.oracle, _ticket(seed, counter), z)
    zbar = z - gamma * f1
    f2 = eval_at(problem.oracle, _ticket(seed, counter + 1), zbar)
    return z - alpha * gamma * f2, mem, counter + 2, {"zbar": zbar}


def _k_bc_seg_plus(problem, gamma, alpha, z, mem, seed, counter):
    t1 = _ticket(seed, counter)
    f_cur = eval_at(problem.oracle, t1, z)
    f_prev = eval_at(problem.oracle, t1, mem["z_prev"])  # same ticket: two-point oracle
    zbar = z - gamma * f_cur + (1.0 - alpha) * (mem["zbar_prev"] - mem["z_prev"] + gamma * f_prev)
    f_bar = eval_at(problem.oracle, _ticket(seed, counter + 1), zbar)
    z_new = z - alpha * gamma * f_bar
    return z_new, {"z_prev": z, "zbar_prev": zbar}, counter + 2, {"zbar": zbar}


def _k_ceg_plus(problem, gamma, alpha, z, mem, seed, counter):
    hz = z - gamma * problem.f(z)
    zbar = _resolve(problem, hz, gamma)
    hzbar = zbar - gamma * problem.f(zbar)
    return z - alpha * (hz - hzbar), mem, counter, {"zbar": zbar}


def _k_bc_pseg_plus(problem, gamma, alpha, z, mem, seed, counter):
    t1 = _ticket(seed, counter)
    f_cur = eval_at(problem.oracle, t1, z)
    f_prev = eval_at(problem.oracle, t1, mem["z_prev"])
    h = (z - gamma * f_cur) + (1.0 - alpha) * (mem["h_prev"] - (mem["z_prev"] - gamma * f_prev))
    zbar = _resolve(problem, h, gamma)
    f_bar = eval_at(problem.oracle, _ticket(seed, counter + 1), zbar)
    z_new = z - alpha * (h - zbar + gamma * f_bar)
    # element of gamma * T(zbar) evaluated with the true operator
    tz = h - zbar + gamma * problem.f(zbar)
    tz_sq = np.sum(tz * tz, axis=-1) / gamma**2
    return z_new, {"z_prev": z, "h_prev": h}, counter + 2, {"zbar": zbar, "tz_sq": tz_sq}


def _k_p1seg_plus(problem, gamma, alpha, z, mem, seed, counter):
    f1 = eval_at(problem.oracle, _ticket(seed, counter), z)
    zbar = _resolve(problem, z - gamma * f1, gamma)
    f2 = eval_at(problem.oracle, _ticket(seed, counter + 1), zbar)
    z_new = z + alpha * ((zbar - z) - gamma * (f2 - f1))
    return z_new, mem, counter + 2, {"zbar": zbar}


def _k_p2seg_plus(problem, gamma, alpha, z, mem, seed, counter):
    f1 = eval_at(problem.oracle, _ticket(seed, counter), z)
    zbar = _resolve(problem, z - gamma * f1, gamma)
    f2 = eval_at(problem.oracle, _ticket(seed, counter + 1), zbar)
    z_new = _resolve(problem, z - alpha * gamma * f2, alpha * gamma)
    return z_new, mem, counter + 2, {"zbar": zbar}


def _k_pseg(problem, gamma, alpha, beta, z, mem, seed, counter):
    f1 = eval_at(problem.oracle, _ticket(seed, counter), z)
    zbar = _resolve(problem, z - beta * gamma * f1, beta * gamma)
    f2 = eval_at(problem.oracle, _ticket(seed, counter + 1), zbar)
    z_new = _resolve(problem, z - alpha * gamma * f2, alpha * gamma)
    return z_new, mem, counter + 2, {"zbar": zbar}


def _apply(mat: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v @ mat.T


def _k_np_pdeg(problem, cfg: PdhgConfig, alpha, z, mem, seed, counter):
    dx = cfg.dim_x
    g1, g2, theta = cfg.gamma1, cfg.gamma2, cfg.theta
    x, y = z[..., :dx], z[..., dx:]
    z_prev = mem["z_prev"]
    xp, yp = z_prev[..., :dx], z_prev[..., dx:]

    t1 = _ticket(seed, counter)
    counter += 1
    f_cur = eval_at(problem.oracle, t1, z)
    f_prev = eval_at(problem.oracle, t1, z_prev)
    fx, fy = f_cur[..., :dx], f_cur[..., dx:]
    fxp, fyp = f_prev[..., :dx], f_prev[..., dx:]

    xhat = x - _apply(g1, fx) + (1.0 - alpha) * (mem["xhat_prev"] - xp + _apply(g1, fxp))
    xbar = problem.prox_x(xhat, g1) if problem.prox_x is not None else xhat

    if theta != 0.0:
        # the mixed evaluations at (xbar^k, y^k) and (xbar^{k-1}, y^{k-1})
        # share the fresh ticket; the shifted-index correction below is what
        # keeps the h-estimate unbiased.
        t2 = _ticket(seed, counter)
        counter += 1
        q_cur = eval_at(problem.oracle, t2, np.concatenate([xbar, y], axis=-1))[..., dx:]
        q_prev = eval_at(problem.oracle, t2, np.concatenate([mem["xbar_prev"], yp], axis=-1))[..., dx:]
        mix_cur = theta * q_cur + (1.0 - theta) * fy
        mix_prev = theta * q_prev + (1.0 - theta) * fyp
    else:
        mix_cur, mix_prev = fy, fyp

    yhat = y - _apply(g2, mix_cur) + (1.0 - alpha) * (mem["yhat_prev"] - yp + _apply(g2, mix_prev))
    ybar = problem.prox_y(yhat, g2) if problem.prox_y is not None else yhat

    zbar = np.concatenate([xbar, ybar], axis=-1)
    t3 = _ticket(seed, counter)
    counter += 1
    f_bar = eval_at(problem.oracle, t3, zbar)
    x_new = x + alpha * (xbar - xhat - _apply(g1, f_bar[..., :dx]))
    y_new = y + alpha * (ybar - yhat - _apply(g2, f_bar[..., dx:]))
    z_new = np.concatenate([x_new, y_new], axis=-1)

    zhat = np.concatenate([xhat, yhat], axis=-1)
    # Gamma^{-1}(zhat - zbar) + F(zbar) is an element of T(zbar); its
    # Gamma-weighted squared norm is the theorem's convergence measure.
    diff = zhat - zbar
    w = np.concatenate(
        [_apply(mem["g1_inv"], diff[..., :dx]), _apply(mem["g2_inv"], diff[..., dx:])], axis=-1
    ) + problem.f(zbar)
    wg = np.concatenate([_apply(g1, w[..., :dx]), _apply(g2, w[..., dx:])], axis=-1)
    tz_sq = np.sum(w * wg, axis=-1)

    mem_new = dict(mem)
    mem_new.update({"z_prev": z, "xhat_prev": xhat, "yhat_prev": yhat, "xbar_prev": xbar})
    return z_new, mem_new, counter, {"zbar": zbar, "tz_sq": tz_sq}


# ---------------------------------------------------------------------------
# Memory initialisation and public single-step API.
# ---------------------------------------------------------------------------


def initial_memory(problem: Problem, spec: AlgorithmSpec, z0: np.ndarray, seed) -> tuple[dict, int]:
    """Default memory for the given algorithm, and the first free counter.

    The bias-corrected schemes spend the dedicated ticket (seed, 0) on their
    memory so that, in the noiseless case, the memory residual vanishes and
    the schemes telescope onto their deterministic counterparts.
    """
    name, gamma = spec.name, spec.gamma
    if name == "bc-seg+":
        f0 = eval_at(problem.oracle, _ticket(seed, 0), z0)
        return {"z_prev": z0, "zbar_prev": z0 - gamma * f0}, 1
    if name == "bc-pseg+":
        f0 = eval_at(problem.oracle, _ticket(seed, 0), z0)
        return {"z_prev": z0, "h_prev": z0 - gamma * f0}, 1
    if name == "np-pdeg":
        cfg = spec.pdhg
        if cfg is None:
            raise ValueError("np-pdeg needs a PdhgConfig")
        dx = cfg.dim_x
        f0 = eval_at(problem.oracle, _ticket(seed, 0), z0)
        mem = {
            "z_prev": z0,
            "xhat_prev": z0[..., :dx] - _apply(cfg.gamma1, f0[..., :dx]),
            "yhat_prev": z0[..., dx:] - _apply(cfg.gamma2, f0[..., dx:]),
            # the paper leaves the first mixed point free; we pin it to x^0
            "xbar_prev": z0[..., :dx],
            "g1_inv": np.linalg.inv(cfg.gamma1),
            "g2_inv": np.linalg.inv(cfg.gamma2),
        }
        return mem, 1
    return {}, 0


def initial_state(problem: Problem, spec: AlgorithmSpec, z0, seed: int = 0) -> SolverState:
    z0 = np.asarray(z0, dtype=float)
    mem, counter = initial_memory(problem, spec, z0, seed)
    return SolverState(z=z0, memory=mem, k=0, counter=counter, seed=seed)


def _require_memory(state: SolverState, keys: tuple[str, ...], name: str) -> None:
    missing = [k for k in keys if k not in state.memory]
    if missing:
        raise ValueError(
            f"{name} state is missing memory {missing}; initialise with initial_state() first"
        )


def step_eg_plus(problem: Problem, state: SolverState, gamma: float, alpha: float) -> SolverState:
    """One deterministic extragradient step with damped update stepsize."""
    z_new, mem, counter, _ = _k_eg_plus(problem, gamma, alpha, state.z, state.memory, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


def step_seg(problem: Problem, state: SolverState, gamma: float, schedule: Schedule) -> SolverState:
    alpha, beta = schedule.alpha(state.k), schedule.beta_at(state.k)
    z_new, mem, counter, _ = _k_seg(problem, gamma, alpha, beta, state.z, state.memory, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


def step_seg_plus(problem: Problem, state: SolverState, gamma: float, schedule: Schedule) -> SolverState:
    alpha = schedule.alpha(state.k)
    z_new, mem, counter, _ = _k_seg_plus(problem, gamma, alpha, state.z, state.memory, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


def step_bc_seg_plus(problem: Problem, state: SolverState, gamma: float, schedule: Schedule) -> SolverState:
    _require_memory(state, ("z_prev", "zbar_prev"), "bc-seg+")
    alpha = schedule.alpha(state.k)
    z_new, mem, counter, _ = _k_bc_seg_plus(problem, gamma, alpha, state.z, state.memory, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


def step_ceg_plus(problem: Problem, state: SolverState, gamma: float, alpha: float) -> SolverState:
    z_new, mem, counter, _ = _k_ceg_plus(problem, gamma, alpha, state.z, state.memory, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


def step_bc_pseg_plus(problem: Problem, state: SolverState, gamma: float, schedule: Schedule) -> SolverState:
    _require_memory(state, ("z_prev", "h_prev"), "bc-pseg+")
    alpha = schedule.alpha(state.k)
    z_new, mem, counter, _ = _k_bc_pseg_plus(problem, gamma, alpha, state.z, state.memory, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


_PROJECTED = {"pseg": _k_pseg, "p1seg+": _k_p1seg_plus, "p2seg+": _k_p2seg_plus, "sf-peg+": _k_p2seg_plus}


def step_projected_baseline(
    mode: str, problem: Problem, state: SolverState, gamma: float, schedule: Schedule
) -> SolverState:
    """One step of PSEG / P1SEG+ / P2SEG+ / SF-PEG+ (mode by identifier)."""
    if mode not in _PROJECTED:
        raise ValueError(f"unknown projected baseline {mode!r}; known: {sorted(_PROJECTED)}")
    if problem.resolvent is None:
        raise ValueError(f"{mode} needs a problem with a resolvent")
    if mode in CONSTANT_STEP_ONLY and schedule.kind != "constant":
        raise ValueError(f"{mode} uses a constant stepsize schedule")
    alpha = schedule.alpha(state.k)
    if mode == "pseg":
        beta = schedule.beta_at(state.k)
        z_new, mem, counter, _ = _k_pseg(problem, gamma, alpha, beta, state.z, state.memory, state.seed, state.counter)
    else:
        kern = _PROJECTED[mode]
        z_new, mem, counter, _ = kern(problem, gamma, alpha, state.z, state.memory, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


def step_np_pdeg(problem: Problem, state: SolverState, cfg: PdhgConfig, schedule: Schedule) -> SolverState:
    _require_memory(state, ("z_prev", "xhat_prev", "yhat_prev", "xbar_prev"), "np-pdeg")
    if problem.dim_x is None:
        raise ValueError("np-pdeg needs a problem with a primal/dual block split")
    if problem.constrained and (problem.prox_x is None or problem.prox_y is None):
        raise ValueError("np-pdeg needs prox maps on a constrained problem")
    mem = dict(state.memory)
    mem.setdefault("g1_inv", np.linalg.inv(cfg.gamma1))
    mem.setdefault("g2_inv", np.linalg.inv(cfg.gamma2))
    alpha = schedule.alpha(state.k)
    z_new, mem, counter, _ = _k_np_pdeg(problem, cfg, alpha, state.z, mem, state.seed, state.counter)
    return replace(state, z=z_new, memory=mem, k=state.k + 1, counter=counter)


# ---------------------------------------------------------------------------
# Trajectories and the run driver.
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Metric time series of one run.

    ``metrics`` maps metric name to a series indexed by iteration; iterate
    metrics have one record per iterate (n_iters + 1 unless the run
    diverged and was truncated), while the theorem surrogate ``tz_dist_sq``
    is indexed by the step that produced it.  ``k_star`` is the random
    iterate drawn with probability proportional to alpha_k from the run's
    own stream.
    """

    algorithm: str
    seed: int
    ks: np.ndarray
    metrics: dict[str, np.ndarray]
    k_star: int
    status: str
    diverged_at: int | None
    n_iters: int
    gamma: float

    @property
    def initial_z(self):  # convenience for envelope tests
        return self.metrics.get("_z0")


def validate_pairing(problem: Problem, name: str) -> None:
    if name in RESOLVENT_REQUIRED and problem.resolvent is None:
        raise ValueError(f"{name} requires a resolvent but problem {problem.name!r} is unconstrained")
    if name in UNCONSTRAINED_ONLY and problem.resolvent is not None:
        raise ValueError(f"{name} only applies to unconstrained problems but {problem.name!r} is constrained")


def _validate_gamma(problem: Problem, spec: AlgorithmSpec) -> None:
    name, gamma = spec.name, spec.gamma
    l_f = problem.constants.l_f
    if name in ("eg+", "seg+", "sf-eg+", "bc-seg+", "ceg+", "bc-pseg+", "p1seg+", "p2seg+", "sf-peg+"):
        if l_f and gamma >= 1.0 / l_f:
            raise ValueError(f"gamma={gamma} outside (0, 1/L_F) with L_F={l_f}")
    if name in ("bc-seg+", "bc-pseg+") and problem.constants.rho is not None:
        lo = max(0.0, -2.0 * problem.constants.rho)
        if gamma <= lo:
            raise ValueError(f"gamma={gamma} must exceed max(0, -2 rho) = {lo}")


def _stepper(problem: Problem, spec: AlgorithmSpec, schedule: Schedule) -> Callable:
    name = spec.name

    def stepper(z, mem, k, seed, counter):
        alpha = schedule.alpha(k)
        if name == "eg+":
            return _k_eg_plus(problem, spec.gamma, alpha, z, mem, seed, counter)
        if name == "seg":
            return _k_seg(problem, spec.gamma, alpha, schedule.beta_at(k), z, mem, seed, counter)
        if name in ("seg+", "sf-eg+"):
            return _k_seg_plus(problem, spec.gamma, alpha, z, mem, seed, counter)
        if name == "bc-seg+":
            return _k_bc_seg_plus(problem, spec.gamma, alpha, z, mem, seed, counter)
        if name == "ceg+":
            return _k_ceg_plus(problem, spec.gamma, alpha, z, mem, seed, counter)
        if name == "bc-pseg+":
            return _k_bc_pseg_plus(problem, spec.gamma, alpha, z, mem, seed, counter)
        if name == "pseg":
            return _k_pseg(problem, spec.gamma, alpha, schedule.beta_at(k), z, mem, seed, counter)
        if name == "p1seg+":
            return _k_p1seg_plus(problem, spec.gamma, alpha, z, mem, seed, counter)
        if name in ("p2seg+", "sf-peg+"):
            return _k_p2seg_plus(problem, spec.gamma, alpha, z, mem, seed, counter)
        if name == "np-pdeg":
            return _k_np_pdeg(problem, spec.pdhg, alpha, z, mem, seed, counter)
        raise AssertionError(name)

    return stepper


def default_metrics(problem: Problem) -> list[str]:
    out = ["grad_norm_sq"]
    if problem.constants.z_star is not None:
        out.append("dist_sq")
    if problem.constrained:
        out.append("residual")
    return out


def _sample_k_star(schedule: Schedule, k_max: int, seed: int, counter: int) -> int:
    """Inverse-CDF draw over the cumulative alpha weights of {0..k_max}."""
    from . import rng

    w = schedule.alpha_array(np.arange(k_max + 1))
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    u = float(rng.uniforms(seed, counter, 1)[0])
    return int(np.searchsorted(cdf, u, side="right").clip(0, k_max))


def run_batch(
    problem: Problem,
    spec: AlgorithmSpec,
    schedule: Schedule,
    n_iters: int,
    seeds,
    *,
    z0=None,
    metrics: list[str] | None = None,
) -> list[Trajectory]:
    """Run one algorithm for several seeds in lockstep.

    Per-seed results are identical to running :func:`run` seed by seed; the
    batching only amortises the vector operations.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    if spec.name in CONSTANT_STEP_ONLY and schedule.kind != "constant":
        raise ValueError(f"{spec.name} uses a constant stepsize schedule")
    validate_pairing(problem, spec.name)
    _validate_gamma(problem, spec)
    if spec.name == "np-pdeg" and spec.pdhg is None:
        raise ValueError("np-pdeg needs AlgorithmSpec.pdhg")

    seeds = np.asarray(seeds, dtype=np.uint64)
    n_seeds = seeds.shape[0]
    dim = problem.dim
    if z0 is None:
        z0 = np.ones(dim)
    z0 = np.asarray(z0, dtype=float)
    z = np.broadcast_to(z0, (n_seeds, dim)).copy()

    wanted = list(metrics) if metrics is not None else default_metrics(problem)
    known = {"grad_norm_sq", "dist_sq", "residual"}
    bad = [m for m in wanted if m not in known]
    if bad:
        raise ValueError(f"unknown metrics {bad}; known: {sorted(known)}")
    if "dist_sq" in wanted and problem.constants.z_star is None:
        raise ValueError("dist_sq metric needs a problem with a known stationary point")
    if "residual" in wanted and not problem.constrained:
        raise ValueError("residual metric needs a constrained problem")

    mem, counter = initial_memory(problem, spec, z, seeds)
    stepper = _stepper(problem, spec, schedule)

    series = {m: np.full((n_iters + 1, n_seeds), np.nan) for m in wanted}
    tz_series = np.full((n_iters, n_seeds), np.nan) if spec.name in ("bc-pseg+", "np-pdeg") else None
    active = np.ones(n_seeds, dtype=bool)
    diverged_at = np.full(n_seeds, -1, dtype=np.int64)

    def record(k):
        fz = problem.f(z)
        if "grad_norm_sq" in series:
            series["grad_norm_sq"][k] = np.where(active, np.sum(fz * fz, axis=-1), np.nan)
        if "dist_sq" in series:
            d = z - problem.constants.z_star
            series["dist_sq"][k] = np.where(active, np.sum(d * d, axis=-1), np.nan)
        if "residual" in series:
            proj = _resolve(problem, z - spec.gamma * fz, spec.gamma)
            r = z - proj
            series["residual"][k] = np.where(active, np.sqrt(np.sum(r * r, axis=-1)), np.nan)

    for k in range(n_iters):
        record(k)
        z_new, mem_new, counter, info = stepper(z, mem, k, seeds, counter)
        if tz_series is not None:
            tz_series[k] = np.where(active, info["tz_sq"], np.nan)
        with np.errstate(over="ignore", invalid="ignore"):
            norms = np.sqrt(np.sum(z_new * z_new, axis=-1))
        blown = active & (~np.isfinite(norms) | (norms > DIVERGENCE_GUARD))
        if blown.any():
            diverged_at[blown] = k + 1
            active &= ~blown
        keep = active[:, None]
        z = np.where(keep, z_new, z)
        merged = {}
        for key, val in mem_new.items():
            old = mem.get(key)
            per_seed = (
                isinstance(val, np.ndarray)
                and isinstance(old, np.ndarray)
                and val.ndim == 2
                and val.shape == old.shape
                and val.shape[0] == n_seeds
            )
            merged[key] = np.where(keep, val, old) if per_seed else val
        mem = merged
        if not active.any():
            break
    record(n_iters)

    out = []
    for i, seed in enumerate(seeds.tolist()):
        d_at = int(diverged_at[i]) if diverged_at[i] >= 0 else None
        k_last = d_at - 1 if d_at is not None else n_iters
        ks = np.arange(k_last + 1)
        tmetrics = {m: series[m][: k_last + 1, i].copy() for m in series}
        if tz_series is not None:
            tmetrics["tz_dist_sq"] = tz_series[: max(k_last, 0), i].copy() if d_at is not None else tz_series[:, i].copy()
        status = _classify(problem, tmetrics, d_at)
        k_star = _sample_k_star(schedule, k_last, int(seed), counter)
        out.append(
            Trajectory(
                algorithm=spec.name,
                seed=int(seed),
                ks=ks,
                metrics=tmetrics,
                k_star=k_star,
                status=status,
                diverged_at=d_at,
                n_iters=n_iters,
                gamma=spec.gamma,
            )
        )
    return out


def _classify(problem: Problem, metrics: dict[str, np.ndarray], diverged_at: int | None) -> str:
    """Terminal status: the hard guard wins; otherwise compare the tail mean
    of the primary metric (natural residual if constrained, else ||Fz||)
    against CONVERGED_TOL and against DIVERGED_FACTOR times its initial
    value."""
    if diverged_at is not None:
        return "diverged"
    if "residual" in metrics:
        primary = metrics["residual"]
    else:
        primary = np.sqrt(metrics["grad_norm_sq"])
    tail = primary[-max(1, len(primary) // 20):]
    tail_mean = float(np.nanmean(tail))
    if tail_mean >= DIVERGED_FACTOR * max(float(primary[0]), 1e-300):
        return "diverged"
    if tail_mean <= CONVERGED_TOL:
        return "converged"
    return "running"


def run(
    problem: Problem,
    spec: AlgorithmSpec | str,
    schedule: Schedule,
    n_iters: int,
    seed: int,
    *,
    gamma: float | None = None,
    z0=None,
    metrics: list[str] | None = None,
) -> Trajectory:
    """Run a single trajectory and return its metric time series.

    ``spec`` may be an :class:`AlgorithmSpec` or a bare identifier combined
    with the ``gamma`` keyword.
    """
    if isinstance(spec, str):
        if gamma is None:
            raise ValueError("passing the algorithm by name requires gamma=")
        spec = AlgorithmSpec(name=spec, gamma=gamma)
    return run_batch(problem, spec, schedule, n_iters, [seed], z0=z0, metrics=metrics)[0]
