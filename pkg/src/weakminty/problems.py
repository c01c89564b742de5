"""Synthetic benchmark problems and resolvent/prox constructors.

Each problem bundles the deterministic operator F, a stochastic oracle, an
optional resolvent for the maximally monotone part A, optional separable prox
maps for the primal-dual scheme, and the known constants.  Minimax objectives
are converted to the inclusion form 0 in Az + Fz with
F(z) = (grad_x phi, -grad_y phi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .oracles import DeterministicOperator, NoiseModel, StochasticOracle


@dataclass(frozen=True)
class Resolvent:
    """The resolvent (id + step*A)^{-1} of a maximally monotone operator.

    ``apply`` takes the input point (shape (..., dim)) and the step (a scalar
    or a block-diagonal stepsize matrix) and returns the resolved point.  For
    the normal cone of a box this is a projection and ignores the step.
    """

    apply: Callable[[np.ndarray, object], np.ndarray]
    kind: str = "generic"

    def __call__(self, v: np.ndarray, step) -> np.ndarray:
        return self.apply(v, step)


@dataclass(frozen=True)
class Constants:
    """Known problem constants; unknown entries stay None."""

    l_f: float
    l_f_hat: float | None = None
    sigma_f: float = 0.0
    rho: float | None = None
    z_star: np.ndarray | None = None


@dataclass(frozen=True)
class Problem:
    """A weak-MVI inclusion 0 in Az + Fz with its stochastic oracle."""

    name: str
    operator: DeterministicOperator
    oracle: StochasticOracle
    constants: Constants
    resolvent: Resolvent | None = None
    prox_x: Callable[[np.ndarray, object], np.ndarray] | None = None
    prox_y: Callable[[np.ndarray, object], np.ndarray] | None = None
    dim_x: int | None = None
    box_bound: float | None = None

    @property
    def dim(self) -> int:
        return self.operator.dim

    @property
    def constrained(self) -> bool:
        return self.resolvent is not None

    def f(self, z: np.ndarray) -> np.ndarray:
        """The deterministic operator F."""
        return self.operator(z)

    def with_gaussian_noise(self, sigma: float, rng_seed: int = 0) -> "Problem":
        """Copy of the problem with additive Gaussian noise of per-coordinate
        std ``sigma``; records sigma_F^2 = dim * sigma^2."""
        oracle = StochasticOracle(
            base=self.operator,
            noise=NoiseModel(kind="gaussian", sigma=float(sigma), rng_seed=rng_seed),
            variance_bound=self.dim * float(sigma) ** 2,
            mean_lipschitz=self.constants.l_f,  # additive noise cancels in differences
        )
        constants = replace(
            self.constants,
            sigma_f=math.sqrt(self.dim) * float(sigma),
            l_f_hat=self.constants.l_f,
        )
        return replace(self, oracle=oracle, constants=constants)


def _noiseless_oracle(op: DeterministicOperator) -> StochasticOracle:
    return StochasticOracle(base=op, noise=NoiseModel(kind="none"), variance_bound=0.0, mean_lipschitz=op.lipschitz)


def box_resolvent(bound: float) -> Resolvent:
    """Resolvent of the normal cone of the box [-bound, bound]^n.

    (id + step * N_C)^{-1} is the Euclidean projection, i.e. a componentwise
    clamp, independent of the step.
    """
    if bound <= 0:
        raise ValueError("bound must be positive")
    b = float(bound)
    return Resolvent(apply=lambda v, step, _b=b: np.clip(v, -_b, _b), kind="box")


def quadratic_game(l: float, rho: float) -> Problem:
    """Unconstrained 2-D quadratic game with prescribed (L, rho).

    The objective a*x*y + (b/2) x^2 - (b/2) y^2 gives the linear operator
    F(x, y) = (b x + a y, -a x + b y) with L = sqrt(a^2 + b^2) and
    rho = b / (a^2 + b^2); inverting, a = sqrt(L^2 - L^4 rho^2), b = L^2 rho.
    The zero is the origin.
    """
    l = float(l)
    rho = float(rho)
    if l <= 0:
        raise ValueError("l must be positive")
    if abs(rho) > 1.0 / (2.0 * l):
        raise ValueError("need |rho| <= 1/(2L) for the parametrisation to be real")
    a = math.sqrt(l**2 - l**4 * rho**2)
    b = l**2 * rho
    m = np.array([[b, a], [-a, b]])
    op = DeterministicOperator(eval=lambda z, _m=m: z @ _m.T, dim=2, lipschitz=l)
    return Problem(
        name="quadratic",
        operator=op,
        oracle=_noiseless_oracle(op),
        constants=Constants(l_f=l, l_f_hat=l, rho=rho, z_star=np.zeros(2)),
        dim_x=1,
    )


def game_matrix(problem: Problem) -> np.ndarray:
    """The 2x2 matrix of a linear 2-D game (evaluated columnwise)."""
    e = np.eye(problem.dim)
    cols = [problem.f(e[i]) - problem.f(np.zeros(problem.dim)) for i in range(problem.dim)]
    return np.stack(cols, axis=-1)


_FORSAKEN_BOUND = 4.0 / 3.0


def _psi_prime(z: np.ndarray) -> np.ndarray:
    # psi(z) = 2 z^6 / 21 - z^4 / 3 + z^2 / 3
    return (4.0 / 7.0) * z**5 - (4.0 / 3.0) * z**3 + (2.0 / 3.0) * z


def _psi_second(z: np.ndarray) -> np.ndarray:
    return (20.0 / 7.0) * z**4 - 4.0 * z**2 + 2.0 / 3.0


def _forsaken_f(z: np.ndarray) -> np.ndarray:
    x, y = z[..., 0], z[..., 1]
    return np.stack([y + _psi_prime(x), -x + _psi_prime(y)], axis=-1)


def _forsaken_lipschitz(grid: int = 801) -> float:
    """Max spectral norm of the Jacobian over the constraint box, by dense
    sampling.  The Jacobian [[psi''(x), 1], [-1, psi''(y)]] depends on the two
    curvatures only, so a 1-D grid and an outer max suffice."""
    t = np.linspace(-_FORSAKEN_BOUND, _FORSAKEN_BOUND, grid)
    c = _psi_second(t)
    p, q = np.meshgrid(c, c, indexing="ij")
    # largest eigenvalue of J^T J in closed form
    s = p * p + q * q + 2.0
    d = np.sqrt((p * p - q * q) ** 2 + 4.0 * (p - q) ** 2)
    return float(np.sqrt(np.max((s + d) / 2.0)))


def global_forsaken() -> Problem:
    """Constrained 2-D minimax with objective x*y + psi(x) - psi(y) on the box
    |x|, |y| <= 4/3, where psi(z) = 2 z^6/21 - z^4/3 + z^2/3.

    F(x, y) = (y + psi'(x), -x + psi'(y)); the origin is the stationary
    point.  L_F is estimated by dense sampling of the Jacobian norm over the
    box; rho is not known in closed form and stays unset.
    """
    l_est = _forsaken_lipschitz()
    op = DeterministicOperator(eval=_forsaken_f, dim=2, lipschitz=l_est)
    bound = _FORSAKEN_BOUND

    def prox(v, step, _b=bound):
        return np.clip(v, -_b, _b)

    return Problem(
        name="global-forsaken",
        operator=op,
        oracle=_noiseless_oracle(op),
        constants=Constants(l_f=l_est, l_f_hat=l_est, rho=None, z_star=np.zeros(2)),
        resolvent=box_resolvent(bound),
        prox_x=prox,
        prox_y=prox,
        dim_x=1,
        box_bound=bound,
    )


def bilinear_box(shift: float = 0.9, bound: float = 1.0) -> Problem:
    """Monotone bilinear objective (x - shift)(y - shift) under the box
    ||(x, y)||_inf <= bound; the stationary point (shift, shift) must be
    interior."""
    shift = float(shift)
    bound = float(bound)
    if abs(shift) >= bound:
        raise ValueError("need |shift| < bound so the stationary point is interior")
    s = shift

    def f(z, _s=s):
        x, y = z[..., 0], z[..., 1]
        return np.stack([y - _s, -(x - _s)], axis=-1)

    op = DeterministicOperator(eval=f, dim=2, lipschitz=1.0)

    def prox(v, step, _b=bound):
        return np.clip(v, -_b, _b)

    return Problem(
        name="bilinear-box",
        operator=op,
        oracle=_noiseless_oracle(op),
        constants=Constants(l_f=1.0, l_f_hat=1.0, rho=0.0, z_star=np.array([s, s])),
        resolvent=box_resolvent(bound),
        prox_x=prox,
        prox_y=prox,
        dim_x=1,
        box_bound=bound,
    )


def shifted_quadratic_box(l: float, rho: float, shift: float = 0.9, bound: float = 1.0) -> Problem:
    """Quadratic game translated so its zero sits at (shift, shift), under the
    box ||(x, y)||_inf <= bound."""
    inner = quadratic_game(l, rho)
    shift = float(shift)
    bound = float(bound)
    if abs(shift) >= bound:
        raise ValueError("need |shift| < bound so the stationary point is interior")
    offset = shift * np.ones(2)
    base = inner.operator

    op = DeterministicOperator(eval=lambda z, _f=base.eval, _o=offset: _f(z - _o), dim=2, lipschitz=inner.constants.l_f)

    def prox(v, step, _b=bound):
        return np.clip(v, -_b, _b)

    return Problem(
        name="shifted-quadratic-box",
        operator=op,
        oracle=_noiseless_oracle(op),
        constants=Constants(l_f=inner.constants.l_f, l_f_hat=inner.constants.l_f, rho=rho, z_star=offset.copy()),
        resolvent=box_resolvent(bound),
        prox_x=prox,
        prox_y=prox,
        dim_x=1,
        box_bound=bound,
    )


def minimax_to_inclusion(
    grad_x: Callable[[np.ndarray], np.ndarray],
    grad_y: Callable[[np.ndarray], np.ndarray],
    prox_f: Callable[[np.ndarray, object], np.ndarray] | None,
    prox_g: Callable[[np.ndarray, object], np.ndarray] | None,
    dim_x: int,
    dim_y: int,
    *,
    lipschitz: float,
    rho: float | None = None,
    z_star: np.ndarray | None = None,
    name: str = "minimax",
) -> Problem:
    """Assemble the inclusion for min_x max_y f(x) + phi(x,y) - g(y).

    F(z) = (grad_x phi, -grad_y phi) and A = (df, dg) is realised through the
    separable prox pair; missing proxes default to the identity.
    """
    dim = dim_x + dim_y

    def f(z):
        gx = grad_x(z)
        gy = grad_y(z)
        return np.concatenate([gx, -gy], axis=-1)

    ident = lambda v, step: v
    px = prox_f if prox_f is not None else ident
    py = prox_g if prox_g is not None else ident

    def resolve(v, step, _px=px, _py=py, _dx=dim_x):
        return np.concatenate([_px(v[..., :_dx], step), _py(v[..., _dx:], step)], axis=-1)

    op = DeterministicOperator(eval=f, dim=dim, lipschitz=lipschitz)
    has_a = prox_f is not None or prox_g is not None
    return Problem(
        name=name,
        operator=op,
        oracle=_noiseless_oracle(op),
        constants=Constants(l_f=lipschitz, l_f_hat=lipschitz, rho=rho, z_star=z_star),
        resolvent=Resolvent(apply=resolve, kind="prox-pair") if has_a else None,
        prox_x=px,
        prox_y=py,
        dim_x=dim_x,
    )


_FACTORIES = {
    "quadratic": quadratic_game,
    "global-forsaken": global_forsaken,
    "bilinear-box": bilinear_box,
    "shifted-quadratic-box": shifted_quadratic_box,
}


def make_problem(name: str, **params) -> Problem:
    """Problem lookup by the config name string."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; known: {sorted(_FACTORIES)}") from None
    return factory(**params)
