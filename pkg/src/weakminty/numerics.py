"""Dense vectors, block-diagonal stepsize matrices and weighted inner products.

Everything at desk scale: problem dimensions never exceed ~10, so storage is
dense and eigenvalues of the small symmetric blocks are computed with a plain
cyclic Jacobi sweep instead of pulling in a LAPACK wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-12


def as_vec(x) -> np.ndarray:
    """Coerce to a finite 1-D float64 vector.

    Raises ValueError on NaN/Inf entries or non 1-D input.
    """
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


def check_finite(v: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} contains non-finite entries")
    return v


def sym_eigvals_jacobi(a, tol: float = 1e-14, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a small symmetric matrix via cyclic Jacobi rotations.

    1x1 and 2x2 matrices are handled in closed form; larger blocks iterate
    Jacobi sweeps until the off-diagonal mass falls below ``tol`` relative to
    the matrix scale.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if not np.allclose(a, a.T, atol=SYMMETRY_TOL * max(1.0, np.abs(a).max())):
        raise ValueError("matrix is not symmetric")
    if n == 1:
        return a[0, :1].copy()
    if n == 2:
        tr, det = a[0, 0] + a[1, 1], a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        disc = math.sqrt(max((tr * tr / 4.0) - det, 0.0))
        return np.array([tr / 2.0 - disc, tr / 2.0 + disc])

    scale = max(np.abs(a).max(), 1.0)
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                off = max(off, abs(apq))
                if abs(apq) <= tol * scale:
                    continue
                # classic Jacobi rotation annihilating a[p, q]
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a = (a + a.T) / 2.0
        if off <= tol * scale:
            break
    return np.sort(np.diag(a))


@dataclass(frozen=True)
class BlockDiagMatrix:
    """Symmetric positive-definite block-diagonal matrix.

    Used as the stepsize/weight matrix of the weighted inner products and as
    the per-block stepsizes of the primal-dual scheme.  Immutable after
    construction; construction validates symmetry (within 1e-12) and positive
    definiteness of every block.
    """

    blocks: tuple[np.ndarray, ...]
    offsets: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        blocks = []
        offsets = [0]
        for b in self.blocks:
            b = np.array(b, dtype=float)
            if b.ndim == 0:
                b = b.reshape(1, 1)
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError(f"block must be square, got shape {b.shape}")
            scale = max(np.abs(b).max(), 1.0)
            if not np.allclose(b, b.T, atol=SYMMETRY_TOL * scale):
                raise ValueError("block is not symmetric within 1e-12")
            b = (b + b.T) / 2.0
            if sym_eigvals_jacobi(b)[0] <= 0.0:
                raise ValueError("block is not positive definite")
            b.setflags(write=False)
            blocks.append(b)
            offsets.append(offsets[-1] + b.shape[0])
        object.__setattr__(self, "blocks", tuple(blocks))
        object.__setattr__(self, "offsets", tuple(offsets))

    @classmethod
    def scaled_identity(cls, gamma: float, dim: int) -> "BlockDiagMatrix":
        """gamma * I as a single block."""
        return cls((gamma * np.eye(dim),))

    @classmethod
    def diagonal(cls, values) -> "BlockDiagMatrix":
        values = as_vec(values)
        return cls(tuple(np.array([[v]]) for v in values))

    @property
    def dim(self) -> int:
        return self.offsets[-1]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Apply to vectors of shape (..., dim)."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: matrix dim {self.dim}, vector dim {v.shape[-1]}")
        parts = []
        for b, lo in zip(self.blocks, self.offsets):
            hi = lo + b.shape[0]
            parts.append(v[..., lo:hi] @ b.T)
        return np.concatenate(parts, axis=-1)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for b, lo in zip(self.blocks, self.offsets):
            hi = lo + b.shape[0]
            out[lo:hi, lo:hi] = b
        return out


def weighted_dot(a, b, w: BlockDiagMatrix) -> float:
    """Inner product <a, W b> for a positive-definite block-diagonal W."""
    a = as_vec(a)
    b = as_vec(b)
    if a.shape != b.shape or a.shape[0] != w.dim:
        raise ValueError(
            f"dimension mismatch: a has dim {a.shape[0]}, b has dim {b.shape[0]}, W has dim {w.dim}"
        )
    return float(a @ w.matvec(b))


def weighted_norm_sq(a, w: BlockDiagMatrix) -> float:
    """Squared norm <a, W a>; nonnegative, zero exactly at a = 0."""
    return weighted_dot(a, a, w)


def smallest_eigenvalue(w: BlockDiagMatrix) -> float:
    """Minimum over blocks of each block's smallest eigenvalue."""
    return min(float(sym_eigvals_jacobi(b)[0]) for b in w.blocks)
