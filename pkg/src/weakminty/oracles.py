"""Deterministic operators and two-point stochastic oracles.

The stochastic oracle F_hat(z, xi) is unbiased with bounded variance and can
be queried at any number of points under the same sample xi.  A ticket is the
value pair (seed, counter) from :mod:`weakminty.rng`; evaluating under a
ticket is pure replay, so two-point consistency holds bit-for-bit.

Noise models:

* ``none``      -- F_hat(z, xi) = F(z) for every ticket.
* ``gaussian``  -- F_hat(z, xi) = F(z) + zeta(xi) with zeta ~ N(0, sigma^2 I)
                   drawn once per ticket and reused at every query point.
* ``finite-sum``-- F = (1/N) sum_i F_i and a ticket selects one component
                   uniformly; F_hat(z, xi) = F_{i(xi)}(z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import rng


@dataclass(frozen=True)
class DeterministicOperator:
    """Single-valued operator F: R^n -> R^n.

    ``eval`` must accept arrays of shape (..., dim) and map them elementwise
    over the leading axes.  ``lipschitz`` is the declared constant L_F, if
    known.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    dim: int
    lipschitz: float | None = None

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: operator dim {self.dim}, point dim {z.shape[-1]}")
        return self.eval(z)


@dataclass(frozen=True)
class NoiseModel:
    """Noise attached to a deterministic operator.

    ``kind`` is one of ``"none"``, ``"gaussian"`` (per-coordinate std
    ``sigma``) and ``"finite-sum"`` (uniform component choice per ticket).
    """

    kind: str = "none"
    sigma: float = 0.0
    components: tuple[DeterministicOperator, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "finite-sum"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.kind == "finite-sum" and not self.components:
            raise ValueError("finite-sum noise needs at least one component")


@dataclass(frozen=True)
class SampleTicket:
    """Opaque sample xi = (seed, counter); a value type, safe to replay."""

    seed: int | np.ndarray
    counter: int


@dataclass
class StochasticOracle:
    """Two-point stochastic oracle around a deterministic base operator.

    ``variance_bound`` is sigma_F^2 = sup_z E||F_hat(z,xi) - F(z)||^2 and
    ``mean_lipschitz`` the mean-square Lipschitz constant L_Fhat, when
    declared.  The draw counter is the only mutable state; it is advanced
    exclusively by :func:`draw_sample`.
    """

    base: DeterministicOperator
    noise: NoiseModel = field(default_factory=NoiseModel)
    variance_bound: float = 0.0
    mean_lipschitz: float | None = None
    negated: bool = False
    _counter: int = field(default=0, repr=False)

    @property
    def dim(self) -> int:
        return self.base.dim

    def mean(self, z: np.ndarray) -> np.ndarray:
        """The deterministic operator E_xi[F_hat(. , xi)]."""
        out = self.base(z)
        return -out if self.negated else out


def draw_sample(oracle: StochasticOracle) -> SampleTicket:
    """Draw the next ticket from the oracle's own stream.

    Deterministic function of (noise.rng_seed, draw counter).
    """
    t = SampleTicket(oracle.noise.rng_seed, oracle._counter)
    oracle._counter += 1
    return t


def eval_at(oracle: StochasticOracle, ticket: SampleTicket, z: np.ndarray) -> np.ndarray:
    """Evaluate F_hat(z, xi) under the given ticket.

    ``z`` may be batched with shape (..., dim); for batched evaluation the
    ticket seed may be an array broadcasting against the leading axes, so
    that each trajectory sees its own stream.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != oracle.dim:
        raise ValueError(f"dimension mismatch: oracle dim {oracle.dim}, point dim {z.shape[-1]}")
    noise = oracle.noise
    if noise.kind == "none":
        out = oracle.base(z)
    elif noise.kind == "gaussian":
        zeta = noise.sigma * rng.normals(ticket.seed, ticket.counter, oracle.dim)
        out = oracle.base(z) + zeta
    else:  # finite-sum
        idx = rng.uniform_index(ticket.seed, ticket.counter, len(noise.components))
        idx = np.asarray(idx)
        vals = np.stack([c(z) for c in noise.components], axis=0)
        if idx.ndim == 0:
            out = vals[int(idx)]
        else:
            if vals.ndim == 2:  # batched seeds at a single shared point
                vals = np.broadcast_to(vals[:, None, :], (vals.shape[0], idx.shape[0], vals.shape[1]))
            out = np.take_along_axis(vals, idx[None, :, None], axis=0)[0]
    return -out if oracle.negated else out


def negate(op):
    """Wrap an operator or oracle so every evaluation returns -F(z).

    Lipschitz and variance constants are preserved; negate(negate(op))
    evaluates pointwise identically to op.  This realises running the
    schemes on -F for problems satisfying the negative weak MVI.
    """
    if isinstance(op, DeterministicOperator):
        inner = op.eval
        return replace(op, eval=lambda z, _f=inner: -_f(z))
    if isinstance(op, StochasticOracle):
        return replace(op, negated=not op.negated)
    raise TypeError(f"cannot negate {type(op).__name__}")


def estimate_mean_lipschitz(
    oracle: StochasticOracle,
    n_pairs: int,
    n_tickets: int,
    *,
    radius: float = 1.0,
    center: np.ndarray | None = None,
    seed: int = 421,
) -> float:
    """Statistical lower bound on the mean-square Lipschitz constant.

    Samples point pairs from the ball of given radius (default: unit ball
    around the origin) and returns the maximum over pairs of

        sqrt( mean_xi ||F_hat(z,xi) - F_hat(z',xi)||^2 ) / ||z - z'||.

    Degenerate pairs (z = z') are skipped; raises ValueError if every pair is
    degenerate.
    """
    if n_pairs < 1 or n_tickets < 1:
        raise ValueError("n_pairs and n_tickets must be >= 1")
    dim = oracle.dim
    if center is None:
        center = np.zeros(dim)
    center = np.asarray(center, dtype=float)

    best = None
    for p in range(n_pairs):
        pts = rng.normals(seed, 2 * p, 2 * (dim + 2)).reshape(2, dim + 2)
        scale = rng.uniforms(seed, 2 * p + 1, 2) ** (1.0 / dim)
        pair = []
        for row, s in zip(pts, scale):
            direction = row[:dim]
            nrm = np.linalg.norm(direction)
            if nrm == 0.0:
                direction = np.ones(dim)
                nrm = math.sqrt(dim)
            pair.append(center + radius * s * direction / nrm)
        z, zp = pair
        gap = np.linalg.norm(z - zp)
        if gap < 1e-12:
            continue
        acc = 0.0
        for t in range(n_tickets):
            ticket = SampleTicket(seed + 1, p * n_tickets + t)
            diff = eval_at(oracle, ticket, z) - eval_at(oracle, ticket, zp)
            acc += float(diff @ diff)
        est = math.sqrt(acc / n_tickets) / gap
        best = est if best is None else max(best, est)
    if best is None:
        raise ValueError("all sampled pairs were degenerate")
    return best


def linear_operator(slope: float, dim: int) -> DeterministicOperator:
    """The scalar-slope linear operator z -> slope * z."""
    return DeterministicOperator(eval=lambda z, s=float(slope): s * z, dim=dim, lipschitz=abs(float(slope)))


def worst_case_finite_sum(n_components: int, lipschitz: float, dim: int = 1, rng_seed: int = 0) -> StochasticOracle:
    """The finite sum with one component of constant N*L and N-1 of constant L.

    This is the construction with the largest gap between the mean operator's
    constant L_F and the mean-square constant L_Fhat.
    """
    n, lip = int(n_components), float(lipschitz)
    comps = [linear_operator(n * lip, dim)] + [linear_operator(lip, dim) for _ in range(n - 1)]
    l_f = (2 * n - 1) * lip / n
    l_f_hat = math.sqrt((n * n + n - 1) / n) * lip
    mean_slope = l_f  # all slopes positive, mean operator is l_f * z
    base = linear_operator(mean_slope, dim)
    return StochasticOracle(
        base=base,
        noise=NoiseModel(kind="finite-sum", components=tuple(comps), rng_seed=rng_seed),
        variance_bound=float("nan"),  # grows with ||z||; not uniformly bounded
        mean_lipschitz=l_f_hat,
    )


def finite_sum_gap_report(n_components: int, lipschitz: float) -> tuple[float, float, float]:
    """Analytic (L_F, L_Fhat, ratio) of the worst-case finite sum.

    L_F = (2N-1) L / N, L_Fhat = sqrt((N^2+N-1)/N) L; the ratio is at least
    sqrt(N)/2, which is what makes decoupling the stepsize from L_Fhat
    worthwhile for finite sums.
    """
    n, lip = int(n_components), float(lipschitz)
    if n < 1:
        raise ValueError("need at least one component")
    if lip <= 0:
        raise ValueError("lipschitz must be positive")
    l_f = (2 * n - 1) * lip / n
    l_f_hat = math.sqrt((n * n + n - 1) / n) * lip
    return l_f, l_f_hat, l_f_hat / l_f
