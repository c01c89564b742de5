"""Stepsize schedules for the second (update) stepsize alpha_k.

All schedules produce values in (0, 1) and are nonincreasing in k.  SEG's
mirror stepsize beta_k defaults to alpha_k when no explicit beta schedule is
attached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("constant", "harmonic", "inverse-sqrt", "robbins-monro")


@dataclass(frozen=True)
class Schedule:
    """One of
    constant       alpha_k = alpha0
    harmonic       alpha_k = alpha0 / (k/c + 1)
    inverse-sqrt   alpha_k = alpha0 / sqrt(k/c + 1)
    robbins-monro  alpha_k = 1 / (k + r)
    """

    kind: str
    alpha0: float | None = None
    c: float | None = None
    r: int | None = None
    beta: "Schedule | None" = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; known: {KINDS}")
        if self.kind == "robbins-monro":
            if self.r is None or int(self.r) < 2:
                raise ValueError("robbins-monro needs integer r >= 2 so alpha_0 < 1")
        else:
            if self.alpha0 is None or not (0.0 < self.alpha0 < 1.0):
                raise ValueError("alpha0 must lie in (0, 1)")
            if self.kind in ("harmonic", "inverse-sqrt") and (self.c is None or self.c <= 0):
                raise ValueError(f"{self.kind} schedule needs c > 0")

    @classmethod
    def constant(cls, alpha0: float) -> "Schedule":
        return cls("constant", alpha0=alpha0)

    @classmethod
    def harmonic(cls, alpha0: float, c: float) -> "Schedule":
        return cls("harmonic", alpha0=alpha0, c=c)

    @classmethod
    def inverse_sqrt(cls, alpha0: float, c: float) -> "Schedule":
        return cls("inverse-sqrt", alpha0=alpha0, c=c)

    @classmethod
    def robbins_monro(cls, r: int) -> "Schedule":
        return cls("robbins-monro", r=int(r))

    def alpha(self, k: int) -> float:
        return float(self.alpha_array(np.asarray([k]))[0])

    def alpha_array(self, k) -> np.ndarray:
        """Vectorised alpha_k over an integer array."""
        k = np.asarray(k, dtype=float)
        if self.kind == "constant":
            return np.full_like(k, self.alpha0)
        if self.kind == "harmonic":
            return self.alpha0 / (k / self.c + 1.0)
        if self.kind == "inverse-sqrt":
            return self.alpha0 / np.sqrt(k / self.c + 1.0)
        return 1.0 / (k + self.r)

    def beta_at(self, k: int) -> float:
        """SEG's first stepsize beta_k; mirrors alpha_k unless overridden."""
        return (self.beta or self).alpha(k)

    def first(self) -> float:
        """alpha_0."""
        return self.alpha(0)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in ("alpha0", "c", "r"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.beta is not None:
            out["beta"] = self.beta.to_dict()
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "Schedule":
        spec = dict(spec)
        beta = spec.pop("beta", None)
        sched = cls(
            kind=spec.pop("kind"),
            alpha0=spec.pop("alpha0", None),
            c=spec.pop("c", None),
            r=spec.pop("r", None),
            beta=cls.from_dict(beta) if beta else None,
        )
        if spec:
            raise ValueError(f"unknown schedule fields: {sorted(spec)}")
        return sched
