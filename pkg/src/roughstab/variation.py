"""Discrete p-variation, Hoelder and rough-path norms, and greedy partitions.

All suprema are taken over sub-partitions of the sampling grid.  The
p-variation of a two-parameter function ``d(i, j)`` over indices ``i0..i1``
is computed exactly by the O(n^2) recursion::

    V(j) = max_{i0 <= i < j} V(i) + d(i, j)^p,    V(i0) = 0

which needs neither a triangle inequality nor continuity, so the same
routine serves the first level, the second level and remainders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def vec_norm(a, naxes=1):
    """Euclidean / Frobenius norm over the last ``naxes`` axes."""
    a = np.asarray(a, dtype=float)
    axes = tuple(range(a.ndim - naxes, a.ndim))
    return np.sqrt((a * a).sum(axis=axes))


@dataclass(frozen=True)
class NormReport:
    value: float
    interval: tuple
    kind: str
    witness: tuple | None = None
    power_sum: float | None = None

    def to_dict(self):
        return {
            "kind": self.kind,
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "value": float(self.value),
            "power_sum": None if self.power_sum is None else float(self.power_sum),
            "witness": None if self.witness is None else [float(t) for t in self.witness],
        }


@dataclass(frozen=True)
class GreedyPartition:
    gamma: float
    times: tuple
    p: float
    total_norm: float

    @property
    def count(self):
        """Number of sub-intervals, N >= 1."""
        return len(self.times) - 1

    @property
    def count_bound(self):
        if math.isinf(self.gamma):
            return 1.0
        return 1.0 + self.gamma ** (-self.p) * self.total_norm ** self.p

    def to_dict(self):
        return {
            "gamma": None if math.isinf(self.gamma) else float(self.gamma),
            "gamma_infinite": math.isinf(self.gamma),
            "p": self.p,
            "count": self.count,
            "count_bound": self.count_bound,
            "rough_norm": self.total_norm,
            "times": [float(t) for t in self.times],
        }


def pvar_dp(row, i0, i1, p):
    """Exact discrete p-variation of a two-parameter function.

    ``row(j, ks)`` must return ``d(k, j)`` for the index array ``ks``.
    Returns ``(V, back)`` indexed from ``i0``: ``V[j - i0]`` is the p-th
    power of the p-variation on ``[i0, j]`` and ``back`` the argmax links.
    """
    n = i1 - i0 + 1
    V = np.zeros(n)
    back = np.zeros(n, dtype=int)
    for j in range(1, n):
        ks = np.arange(i0, i0 + j)
        cand = V[:j] + row(i0 + j, ks) ** p
        k = int(np.argmax(cand))
        V[j] = cand[k]
        back[j] = k
    return V, back


def _witness(back):
    pts = [back.size - 1]
    while pts[-1] != 0:
        pts.append(int(back[pts[-1]]))
    return pts[::-1]


def _resolve(n, grid, interval):
    if grid is not None and len(grid) != n:
        raise DomainError(f"{n} values for a grid of {len(grid)} points")
    if interval is None:
        i0, i1 = 0, n - 1
    elif grid is None:
        i0, i1 = int(interval[0]), int(interval[1])
    else:
        i0, i1 = grid.index(interval[0]), grid.index(interval[1])
    if not 0 <= i0 <= i1 < n:
        raise DomainError(f"interval {interval} is not an ordered pair inside the grid")
    times = np.arange(n, dtype=float) if grid is None else grid.points
    return i0, i1, times


def _check_p(p, name="p"):
    if not p >= 1.0:
        raise DomainError(f"{name} must be >= 1, got {p}")


def _flat(values):
    v = np.asarray(values, dtype=float)
    return v.reshape(v.shape[0], -1)


def _report(V, back, i0, times, p, kind):
    wit = tuple(float(times[i0 + k]) for k in _witness(back))
    return NormReport(
        value=float(V[-1] ** (1.0 / p)),
        interval=(float(times[i0]), float(times[i0 + back.size - 1])),
        kind=kind,
        witness=wit,
        power_sum=float(V[-1]),
    )


def p_variation(values, p, grid=None, interval=None, method="exact"):
    """p-variation of a path sampled on a grid, with a maximizing partition.

    ``values`` has shape ``(n, ...)``; trailing axes are flattened and
    measured with the Euclidean norm.  Without a grid, indices play the role
    of times.  ``method="blocked"`` (for very long paths) runs the exact
    recursion on blocks and then again on the union of block witnesses; it
    returns a lower bound that is exact whenever the optimal partition uses
    only block-witness points.
    """
    _check_p(p)
    v = _flat(values)
    i0, i1, times = _resolve(v.shape[0], grid, interval)
    if i0 == i1:
        return NormReport(0.0, (float(times[i0]),) * 2, "p-var", (float(times[i0]),), 0.0)
    if method == "blocked":
        return _p_variation_blocked(v, p, i0, i1, times)

    def row(j, ks):
        return vec_norm(v[j] - v[ks])

    V, back = pvar_dp(row, i0, i1, p)
    return _report(V, back, i0, times, p, "p-var")


def _p_variation_blocked(v, p, i0, i1, times, block=2048):
    keep = {i0, i1}
    for a in range(i0, i1, block):
        b = min(a + block, i1)
        rep = p_variation(v[a:b + 1], p)
        keep.update(a + int(k) for k in rep.witness)
    idx = np.array(sorted(keep))
    sub = p_variation(v[idx], p)
    wit = tuple(float(times[idx[int(k)]]) for k in sub.witness)
    return NormReport(sub.value, (float(times[i0]), float(times[i1])), "p-var (blocked lower bound)",
                      wit, sub.power_sum)


def second_level_row(rp):
    X = rp.second_level
    x = rp.first_level

    def row(j, ks):
        rel = x[ks] - x[0]
        inc = X[j] - X[ks] - rel[:, :, None] * (x[j] - x[ks])[:, None, :]
        return vec_norm(inc, 2)

    return row


def first_level_row(rp):
    x = rp.first_level

    def row(j, ks):
        return vec_norm(x[j] - x[ks])

    return row


def q_variation_second_level(rp, q, interval=None):
    """q-variation of ``(s, t) -> X_{s,t}`` (Frobenius norm), ``q = p / 2``."""
    _check_p(q, "q")
    i0, i1, times = _resolve(len(rp), rp.grid, interval)
    if i0 == i1:
        return NormReport(0.0, (float(times[i0]),) * 2, "q-var second level", (float(times[i0]),), 0.0)
    V, back = pvar_dp(second_level_row(rp), i0, i1, q)
    return _report(V, back, i0, times, q, "q-var second level")


def rough_pvar_parts(rp, p, interval=None):
    """``(sum ||x||^p, sum ||X||^q)`` suprema on the interval (q = p/2)."""
    x_rep = p_variation(rp.first_level, p, rp.grid, interval)
    X_rep = q_variation_second_level(rp, p / 2.0, interval)
    return x_rep.power_sum, X_rep.power_sum


def rough_pvar_norm(rp, p, interval=None):
    """``(|||x|||_p^p + |||X|||_q^q)^(1/p)`` with ``q = p/2``."""
    a, b = rough_pvar_parts(rp, p, interval)
    return float((a + b) ** (1.0 / p))


def rough_pvar_profile(rp, p, i0, i1):
    """p-th power of the rough norm on ``[t_i0, t_j]`` for every ``j`` in ``i0..i1``."""
    V1, _ = pvar_dp(first_level_row(rp), i0, i1, p)
    V2, _ = pvar_dp(second_level_row(rp), i0, i1, p / 2.0)
    return V1 + V2


def holder_norm(values, alpha, grid, interval=None):
    """``max ||x_{s,t}|| / (t - s)^alpha`` over grid pairs."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"Hoelder exponent must lie in (0, 1), got {alpha}")
    v = _flat(values)
    i0, i1, times = _resolve(v.shape[0], grid, interval)
    best = 0.0
    for j in range(i0 + 1, i1 + 1):
        ks = np.arange(i0, j)
        r = vec_norm(v[j] - v[ks]) / (times[j] - times[ks]) ** alpha
        best = max(best, float(r.max()))
    return best


def greedy_times(rp, gamma, p, interval=None, check_bound=True):
    """Greedy stopping times for threshold ``gamma``.

    ``tau_{i+1}`` is the first grid point after ``tau_i`` where the rough
    p-variation norm on ``[tau_i, t]`` reaches ``gamma`` (first exceedance),
    capped at the interval end.  ``gamma = inf`` yields the trivial
    partition.
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    i0, i1, times = _resolve(len(rp), rp.grid, interval)
    total = rough_pvar_norm(rp, p, (times[i0], times[i1])) if i1 > i0 else 0.0
    taus = [i0]
    if not math.isinf(gamma):
        thresh = gamma ** p
        r1, r2 = first_level_row(rp), second_level_row(rp)
        q = p / 2.0
        start = i0
        V1, V2 = [0.0], [0.0]
        j = start + 1
        while j <= i1:
            ks = np.arange(start, j)
            v1 = float((np.asarray(V1) + r1(j, ks) ** p).max())
            v2 = float((np.asarray(V2) + r2(j, ks) ** q).max())
            if v1 + v2 >= thresh and j < i1:
                taus.append(j)
                start = j
                V1, V2 = [0.0], [0.0]
            else:
                V1.append(v1)
                V2.append(v2)
            j += 1
    if taus[-1] != i1:
        taus.append(i1)
    part = GreedyPartition(float(gamma), tuple(float(times[k]) for k in taus), float(p), total)
    if check_bound and part.count > part.count_bound * (1 + 1e-12):
        raise AssertionError(f"greedy count {part.count} exceeds bound {part.count_bound}")
    return part


def default_gamma(C_p, C_g):
    """Greedy threshold ``1 / (4 C_p C_g)``."""
    if not (C_p > 0 and C_g > 0):
        raise DomainError(f"default_gamma needs positive constants, got C_p={C_p}, C_g={C_g}")
    return 1.0 / (4.0 * C_p * C_g)


def gamma_or_inf(C_p, C_g):
    """:func:`default_gamma`, with ``inf`` for noise-free problems (``C_g == 0``)."""
    return math.inf if C_g == 0 else default_gamma(C_p, C_g)
