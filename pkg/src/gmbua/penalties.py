"""Mixed two-level group norms, their proximal operators, and the simplex
projection.

The per-pixel penalty attached to a :class:`PenaltySpec` is the s-th power
form ``R(x) = sum_p ||x_{G_p}||_r ^ s``. For the l1 (r=s=1) and group
(r=2, s=1) specs this coincides with the mixed norm itself; for the elitist
(r=1, s=2) and fractional specs the power form is used because it is
groupwise separable and admits an exact (or scalar-solve) prox.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels

KINDS = ("none", "l1", "group", "elitist", "fractional")

_FIXED_RS = {"l1": (1.0, 1.0), "group": (2.0, 1.0), "elitist": (1.0, 2.0)}


class PenaltyError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltySpec:
    """Sparsity penalty selector: kind plus inner/outer exponents (r, s)."""

    kind: str = "none"
    r: float = 2.0
    s: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PenaltyError(f"unknown penalty kind {self.kind!r}")
        if self.kind in _FIXED_RS:
            object.__setattr__(self, "r", _FIXED_RS[self.kind][0])
            object.__setattr__(self, "s", _FIXED_RS[self.kind][1])
        if self.kind != "none" and (self.r <= 0 or self.s <= 0):
            raise PenaltyError("r and s must be positive")


@dataclass(frozen=True)
class GroupStructure:
    """Contiguous partition of {0..q-1} into ordered index ranges."""

    ranges: tuple[tuple[int, int], ...]
    q: int = field(init=False)

    def __post_init__(self):
        ranges = tuple((int(a), int(b)) for a, b in self.ranges)
        object.__setattr__(self, "ranges", ranges)
        pos = 0
        for a, b in ranges:
            if a != pos or b <= a:
                raise PenaltyError(
                    f"group ranges must be a contiguous ordered partition; got {ranges}"
                )
            pos = b
        object.__setattr__(self, "q", pos)

    def __len__(self):
        return len(self.ranges)

    @property
    def starts(self):
        return np.array([a for a, _ in self.ranges], dtype=np.int64)

    @property
    def stops(self):
        return np.array([b for _, b in self.ranges], dtype=np.int64)

    @property
    def sizes(self):
        return np.array([b - a for a, b in self.ranges], dtype=np.int64)

    @classmethod
    def from_sizes(cls, sizes):
        edges = np.concatenate([[0], np.cumsum(sizes)])
        return cls(tuple(zip(edges[:-1], edges[1:])))


def mixed_norm(x, groups: GroupStructure, r: float, s: float) -> float:
    """Two-level norm (sum_p (sum_i |x_i|^r)^(s/r))^(1/s) of a vector."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise PenaltyError("non-finite input to mixed_norm")
    if x.ndim != 1 or x.shape[0] != groups.q:
        raise PenaltyError(f"expected length-{groups.q} vector, got shape {x.shape}")
    total = 0.0
    for a, b in groups.ranges:
        total += np.sum(np.abs(x[a:b]) ** r) ** (s / r)
    return float(total ** (1.0 / s))


def _group_norms(x, groups: GroupStructure, r: float):
    """(P, n) matrix of within-group l_r norms of the columns of x."""
    out = np.empty((len(groups), x.shape[1]))
    for p, (a, b) in enumerate(groups.ranges):
        if r == 2.0:
            out[p] = np.sqrt(np.sum(x[a:b] ** 2, axis=0))
        elif r == 1.0:
            out[p] = np.sum(np.abs(x[a:b]), axis=0)
        else:
            out[p] = np.sum(np.abs(x[a:b]) ** r, axis=0) ** (1.0 / r)
    return out

def penalty_column(x, groups: GroupStructure, spec: PenaltySpec) -> float:
    """Per-pixel penalty value: sum_p ||x_{G_p}||_r ^ s."""
    return penalty_matrix(np.asarray(x, dtype=np.float64)[:, None], groups, spec)


def penalty_matrix(x, groups: GroupStructure, spec: PenaltySpec) -> float:
    """Penalty over a coefficient matrix: columnwise penalty summed over pixels."""
    if spec.kind == "none":
        raise PenaltyError("penalty_matrix requires a non-'none' spec")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != groups.q:
        raise PenaltyError(f"expected ({groups.q}, n) matrix, got shape {x.shape}")
    return float(np.sum(_group_norms(x, groups, spec.r) ** spec.s))


def prox(v, groups: GroupStructure, spec: PenaltySpec, t: float):
    """Proximal operator of t * R(.) applied to each column of v.

    Closed form for l1 / group / elitist; safeguarded Newton scalar solve
    for fractional (supported for r = 2 only).
    """
    if t < 0:
        raise PenaltyError("prox step t must be nonnegative")
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    vm = np.ascontiguousarray(v[:, None] if single else v)
    if not vm.flags.writeable:  # typed memoryviews reject read-only buffers
        vm = vm.copy()
    if vm.shape[0] != groups.q:
        raise PenaltyError(f"expected {groups.q} rows, got {vm.shape[0]}")
    if spec.kind == "none" or t == 0.0:
        out = vm.copy()
    elif spec.kind == "l1":
        out = kernels.prox_l1(vm, t)
    elif spec.kind == "group":
        out = kernels.prox_group(vm, groups.starts, groups.stops, t)
    elif spec.kind == "elitist":
        out = kernels.prox_elitist(vm, groups.starts, groups.stops, t)
    else:
        if spec.r != 2.0:
            raise PenaltyError("fractional prox is implemented for r = 2 only")
        out, resid = kernels.prox_frac(vm, groups.starts, groups.stops, t, spec.s)
        if resid > 1e-8:
            raise PenaltyError(
                f"fractional prox scalar solve did not converge (residual {resid:.3e})"
            )
    return out[:, 0] if single else out


def project_simplex(v):
    """Euclidean projection onto {u >= 0, sum u = 1} (columns if v is 2-D)."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise PenaltyError("non-finite input to project_simplex")
    single = v.ndim == 1
    vm = np.ascontiguousarray(v[:, None] if single else v)
    if not vm.flags.writeable:
        vm = vm.copy()
    out = kernels.project_simplex_cols(vm)
    return out[:, 0] if single else out
