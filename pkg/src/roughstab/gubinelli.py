"""Controlled rough paths and the compensated Riemann-sum rough integral.

Shape conventions: a controlled path with values in ``R^{vshape}`` stores
``values`` of shape ``(n, *vshape)`` and a Gubinelli derivative of shape
``(n, *vshape, m)`` so that ``y_{s,t} ~ y'_s . x_{s,t}`` contracts the last
axis.  For an integrand with ``vshape = (*out, m)`` the compensation term
``y'_u (x) X_{u,v}`` is ``sum_{k,l} y'[..., k, l] X[l, k]``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import ConstantAuditWarning, DimensionError, DomainError
from .rough_core import RoughPath, TimeGrid
from .variation import first_level_row, pvar_dp, second_level_row, vec_norm


def sewing_constant(p):
    """``C_p = (1 - 2^(1 - 3/p))^(-1)`` for ``2 < p < 3``."""
    if not 2.0 < p < 3.0:
        raise DomainError(f"sewing constant needs 2 < p < 3, got {p}")
    return 1.0 / (1.0 - 2.0 ** (1.0 - 3.0 / p))


class SmoothFunction:
    """A coefficient ``g`` with its derivative and declared bound constants.

    ``value(y)`` maps ``(..., d)`` to ``(..., *out_shape)`` and
    ``jacobian(y)`` to ``(..., *out_shape, d)``.  ``C_g`` is the declared
    bound on ``||Dg||, ||D^2 g||, ||D^3 g||`` (and on ``||g||_inf`` for bounded
    kinds); for the affine kind it bounds the linear part.  Set
    ``vectorized=False`` for callables that only accept a single point.
    """

    def __init__(self, value, jacobian, C_g, out_shape, sup_norm=math.inf, kind="C3",
                 hessian=None, vectorized=True, name="g", linear_part=None, offset=None):
        if kind not in ("C3", "affine"):
            raise DomainError(f"unknown coefficient kind {kind!r}")
        self._value = value
        self._jacobian = jacobian
        self._hessian = hessian
        self.C_g = float(C_g)
        self.sup_norm = float(sup_norm)
        self.kind = kind
        self.out_shape = tuple(out_shape)
        self.vectorized = vectorized
        self.name = name
        self.linear_part = linear_part
        self.offset = offset

    def __repr__(self):
        return f"SmoothFunction({self.name}, kind={self.kind}, C_g={self.C_g:g})"

    def _apply(self, fn, y, tail):
        y = np.asarray(y, dtype=float)
        if self.vectorized or y.ndim == 1:
            return np.asarray(fn(y), dtype=float)
        flat = y.reshape(-1, y.shape[-1])
        out = np.stack([np.asarray(fn(v), dtype=float) for v in flat])
        return out.reshape(y.shape[:-1] + tail)

    def __call__(self, y):
        return self._apply(self._value, y, self.out_shape)

    def jacobian(self, y):
        d = np.shape(y)[-1]
        return self._apply(self._jacobian, y, self.out_shape + (d,))

    def hessian(self, y):
        if self._hessian is None:
            return None
        d = np.shape(y)[-1]
        return self._apply(self._hessian, y, self.out_shape + (d, d))

    @property
    def at_zero_norm(self):
        """``||g(0)||`` (Frobenius); needs the input dimension from the jacobian shape."""
        if self.offset is not None:
            return float(vec_norm(np.asarray(self.offset), np.ndim(self.offset)))
        raise DimensionError("g(0) unknown; evaluate g at a zero vector instead")


def _op_norm(M, d):
    """Operator norm of a tensor viewed as a map from R^d (last axis)."""
    mat = np.asarray(M, dtype=float).reshape(-1, d)
    return float(np.linalg.norm(mat, 2))


def affine_function(C, g0):
    """``g(y) = C y + g0`` with ``C`` of shape ``(*out, d)``; ``C_g = ||C||``."""
    C = np.asarray(C, dtype=float)
    g0 = np.asarray(g0, dtype=float)
    if C.shape[:-1] != g0.shape:
        raise DimensionError(f"C {C.shape} and g0 {g0.shape} are incompatible")
    d = C.shape[-1]

    def value(y):
        return np.tensordot(y, C, axes=([-1], [-1])) + g0

    def jac(y):
        y = np.asarray(y)
        return np.broadcast_to(C, y.shape[:-1] + C.shape)

    def hess(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + C.shape + (d,))

    return SmoothFunction(value, jac, _op_norm(C, d), g0.shape, kind="affine", hessian=hess,
                          name="affine", linear_part=C, offset=g0)


def constant_function(g0, d):
    """Additive coefficient ``g(y) = g0``; ``C_g`` is set to ``||g0||`` so it also bounds ``||g||_inf``."""
    g0 = np.asarray(g0, dtype=float)
    norm = float(vec_norm(g0, g0.ndim))

    def value(y):
        y = np.asarray(y)
        return np.broadcast_to(g0, y.shape[:-1] + g0.shape).copy()

    def jac(y):
        y = np.asarray(y)
        return np.zeros(y.shape[:-1] + g0.shape + (d,))

    return SmoothFunction(value, jac, norm, g0.shape, sup_norm=norm, kind="C3",
                          hessian=lambda y: np.zeros(np.shape(y)[:-1] + g0.shape + (d, d)),
                          name="additive", linear_part=np.zeros(g0.shape + (d,)), offset=g0)


def diagonal_function(phi, dphi, d, m, C_g, sup_norm, name, d2phi=None):
    """``g(y)[i, k] = phi(y_i) * E[i, k]`` with ``E = eye(d, m)``.

    A convenient family of ``R^{d x m}``-valued coefficients whose derivative
    norms are those of the scalar ``phi``.
    """
    E = np.eye(d, m)
    eye_d = np.eye(d)

    def value(y):
        return phi(np.asarray(y))[..., :, None] * E

    def jac(y):
        dp = dphi(np.asarray(y))
        # J[..., i, k, j] = delta_ij phi'(y_i) E[i, k]
        return dp[..., :, None, None] * E[:, :, None] * eye_d[:, None, :]

    hess = None
    if d2phi is not None:
        def hess(y):
            dd = d2phi(np.asarray(y))
            sel = eye_d[:, None, :, None] * eye_d[:, None, None, :]
            return dd[..., :, None, None, None] * E[:, :, None, None] * sel

    return SmoothFunction(value, jac, C_g, (d, m), sup_norm=sup_norm, kind="C3", hessian=hess, name=name)


def sine_function(scale, d, m, shift=0.0):
    """``phi(u) = scale * sin(u) + shift`` on the diagonal; bounded with all derivatives."""
    c = abs(scale) + abs(shift)
    fn = diagonal_function(lambda u: scale * np.sin(u) + shift, lambda u: scale * np.cos(u), d, m,
                           C_g=c, sup_norm=c, name="sine", d2phi=lambda u: -scale * np.sin(u))
    fn.offset = shift * np.eye(d, m)
    return fn


def cosine_function(scale, d, m, shift=0.0):
    """``phi(u) = scale * cos(u) + shift`` on the diagonal."""
    c = abs(scale) + abs(shift)
    fn = diagonal_function(lambda u: scale * np.cos(u) + shift, lambda u: -scale * np.sin(u), d, m,
                           C_g=c, sup_norm=c, name="cosine", d2phi=lambda u: -scale * np.cos(u))
    fn.offset = (scale + shift) * np.eye(d, m)
    return fn


def audit_constants(g, points, warn=True):
    """Largest sampled ``||Dg||`` (and ``||g||`` for bounded kinds) versus ``C_g``.

    Returns the worst ratio sampled/declared; ratios above 1 emit a
    :class:`ConstantAuditWarning` when ``warn`` is set.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts.shape[-1]
    worst = 0.0
    for y in pts:
        J = g.jacobian(y)
        worst = max(worst, _op_norm(J, d))
        if g.kind == "C3" and math.isfinite(g.sup_norm):
            worst = max(worst, float(vec_norm(g(y), len(g.out_shape))))
    ratio = worst / g.C_g if g.C_g > 0 else (math.inf if worst > 0 else 0.0)
    if warn and ratio > 1 + 1e-12:
        warnings.warn(f"{g!r}: sampled derivative/sup norm {worst:g} exceeds C_g", ConstantAuditWarning,
                      stacklevel=2)
    return ratio


class ControlledPath:
    """A path ``y`` controlled by a reference rough path, with derivative ``y'``."""

    def __init__(self, reference, values, derivative):
        if not isinstance(reference, RoughPath):
            raise TypeError("reference must be a RoughPath")
        y = np.asarray(values, dtype=float)
        dy = np.asarray(derivative, dtype=float)
        n, m = len(reference), reference.dim
        if y.shape[0] != n:
            raise DimensionError(f"{y.shape[0]} values for a reference of {n} points")
        if dy.shape != y.shape + (m,):
            raise DimensionError(f"derivative must have shape {y.shape + (m,)}, got {dy.shape}")
        self.reference = reference
        self.values = y
        self.derivative = dy

    @classmethod
    def from_rough_path(cls, rp):
        """``y = x`` with ``y' = Id``."""
        m = rp.dim
        return cls(rp, rp.first_level, np.broadcast_to(np.eye(m), (len(rp), m, m)))

    @property
    def vshape(self):
        return self.values.shape[1:]

    @property
    def grid(self):
        return self.reference.grid

    def __len__(self):
        return self.values.shape[0]

    def remainder_idx(self, i, j):
        """``R_{s,t} = y_{s,t} - y'_s . x_{s,t}`` for index arrays (broadcasting)."""
        x = self.reference.first_level
        dx = x[j] - x[i]
        lin = np.einsum("...l,...l->...", self.derivative[i], _expand(dx, self.derivative[i].ndim))
        return self.values[j] - self.values[i] - lin

    def remainder_row(self):
        nv = len(self.vshape)

        def row(j, ks):
            return vec_norm(self.remainder_idx(ks, j), nv) if nv else np.abs(self.remainder_idx(ks, j))

        return row

    def _interval(self, interval):
        if interval is None:
            return 0, len(self) - 1
        return self.grid.index(interval[0]), self.grid.index(interval[1])

    def remainder_qvar(self, q, interval=None):
        """``|||R^y|||_{q-var}`` on the interval."""
        i0, i1 = self._interval(interval)
        if i1 == i0:
            return 0.0
        V, _ = pvar_dp(self.remainder_row(), i0, i1, q)
        return float(V[-1] ** (1.0 / q))

    def derivative_pvar(self, p, interval=None):
        i0, i1 = self._interval(interval)
        if i1 == i0:
            return 0.0
        dv = self.derivative.reshape(len(self), -1)
        V, _ = pvar_dp(lambda j, ks: vec_norm(dv[j] - dv[ks]), i0, i1, p)
        return float(V[-1] ** (1.0 / p))

    def value_pvar(self, p, interval=None):
        i0, i1 = self._interval(interval)
        if i1 == i0:
            return 0.0
        v = self.values.reshape(len(self), -1)
        V, _ = pvar_dp(lambda j, ks: vec_norm(v[j] - v[ks]), i0, i1, p)
        return float(V[-1] ** (1.0 / p))

    def controlled_norm(self, p, interval=None):
        """``|||y'|||_{p-var} + |||R^y|||_{q-var}``."""
        return self.derivative_pvar(p, interval) + self.remainder_qvar(p / 2.0, interval)


def _expand(dx, ndim):
    """Broadcast increments ``(..., m)`` against a derivative of ``ndim`` axes."""
    dx = np.asarray(dx)
    while dx.ndim < ndim:
        dx = np.expand_dims(dx, -2)
    return dx


def remainder(cp, s, t):
    """``y_{s,t} - y'_s . x_{s,t}`` at grid times ``s <= t``."""
    i, j = cp.grid.index(s), cp.grid.index(t)
    if i > j:
        raise DomainError("remainder needs s <= t")
    return cp.remainder_idx(i, j)


def compose(g, cp):
    """``g(y)`` as a controlled path with derivative ``Dg(y) y'``."""
    if cp.values.ndim != 2:
        raise DimensionError("compose expects vector-valued controlled paths")
    vals = g(cp.values)
    J = g.jacobian(cp.values)
    deriv = np.einsum("n...j,njl->n...l", J, cp.derivative)
    return ControlledPath(cp.reference, vals, deriv)


def compose_remainder_excess(g, cp, composed, pairs):
    """Largest ``||R^{g(y)}|| - (C_g ||R^y|| + 1/2 C_g ||y'_s|| ||y_{s,t}|| ||x_{s,t}||)``.

    Non-positive whenever ``g`` honours its declared constant.  With
    ``||y'|| <= C_g`` (as for RDE solutions with ``||g|| <= C_g``) this is the
    familiar ``C_g ||R^y|| + 1/2 C_g^2 ||y_{s,t}|| ||x_{s,t}||`` pattern.
    """
    pr = np.asarray(pairs, dtype=int)
    i, j = pr[:, 0], pr[:, 1]
    nv = len(composed.vshape)
    lhs = vec_norm(composed.remainder_idx(i, j), nv)
    Ry = vec_norm(cp.remainder_idx(i, j), cp.values.ndim - 1)
    yst = vec_norm(cp.values[j] - cp.values[i], cp.values.ndim - 1)
    xst = vec_norm(cp.reference.first_level[j] - cp.reference.first_level[i])
    dnorm = vec_norm(cp.derivative[i], cp.derivative.ndim - 1)
    rhs = g.C_g * Ry + 0.5 * g.C_g * dnorm * yst * xst
    return float((lhs - rhs).max())


def _partition_indices(cp, interval, partition):
    grid = cp.grid
    i0, i1 = (0, len(grid) - 1) if interval is None else (grid.index(interval[0]), grid.index(interval[1]))
    if i1 < i0:
        raise DomainError("integration interval must be ordered")
    if partition is None:
        return np.arange(i0, i1 + 1)
    pts = partition.points if isinstance(partition, TimeGrid) else np.asarray(partition, dtype=float)
    idx = np.array([grid.index(t) for t in pts], dtype=int)
    if idx[0] != i0 or idx[-1] != i1 or np.any(np.diff(idx) <= 0):
        raise DomainError("partition must be increasing grid times from the interval start to its end")
    return idx


def rough_integral(cp, interval=None, partition=None):
    """Compensated Riemann sum ``sum y_u x_{u,v} + y'_u (x) X_{u,v}``.

    Returns ``(value, indefinite)`` where ``indefinite`` is the running
    integral on the partition points, itself controlled with derivative
    ``y``.  An empty interval gives a zero value and ``indefinite=None``.
    """
    m = cp.reference.dim
    if not cp.vshape or cp.vshape[-1] != m:
        raise DimensionError(f"integrand values must end in the path dimension {m}, got {cp.vshape}")
    idx = _partition_indices(cp, interval, partition)
    out_shape = cp.vshape[:-1]
    if idx.size < 2:
        return np.zeros(out_shape), None
    rp = cp.reference
    u, v = idx[:-1], idx[1:]
    dx = rp.first_level[v] - rp.first_level[u]
    XX = rp.X_inc(u, v)
    terms = np.einsum("p...l,pl->p...", cp.values[u], dx) + np.einsum("p...kl,plk->p...", cp.derivative[u], XX)
    run = np.concatenate([np.zeros((1,) + out_shape), np.cumsum(terms, axis=0)])
    indefinite = ControlledPath(rp.subsample(idx), run, cp.values[idx])
    return run[-1], indefinite


def cross_integral(y, z, interval=None, partition=None):
    """``int y dz`` for scalar controlled paths ``y, z`` on the same rough path.

    Uses ``sum y_u z_{u,v} + y'_u^l z'_u^k X^{lk}_{u,v}``.
    """
    if y.reference is not z.reference:
        raise DimensionError("cross_integral needs a common reference rough path")
    if y.vshape or z.vshape:
        raise DimensionError("cross_integral is defined for scalar controlled paths")
    idx = _partition_indices(y, interval, partition)
    if idx.size < 2:
        return 0.0
    rp = y.reference
    u, v = idx[:-1], idx[1:]
    XX = rp.X_inc(u, v)
    terms = y.values[u] * (z.values[v] - z.values[u]) + np.einsum("pl,pk,plk->p", y.derivative[u], z.derivative[u], XX)
    return float(terms.sum())


def sewing_residual_bound(cp, p, i, j):
    """Left and right sides of the local sewing estimate on ``[t_i, t_j]``.

    Left: ``||int y dx - y_s x_{s,t} - y'_s X_{s,t}||`` (integral over the grid).
    Right: ``C_p (|||x|||_p |||R|||_q + |||y'|||_p |||X|||_q)``.
    """
    grid = cp.grid
    s, t = grid.points[i], grid.points[j]
    val, _ = rough_integral(cp, (s, t))
    rp = cp.reference
    dx = rp.x_inc(i, j)
    XX = rp.X_inc(i, j)
    germ = np.einsum("...l,l->...", cp.values[i], dx) + np.einsum("...kl,lk->...", cp.derivative[i], XX)
    nv = len(cp.vshape) - 1
    lhs = float(vec_norm(val - germ, nv)) if nv else float(abs(val - germ))
    q = p / 2.0
    V1, _ = pvar_dp(first_level_row(rp), i, j, p)
    V2, _ = pvar_dp(second_level_row(rp), i, j, q)
    xp, Xq = V1[-1] ** (1 / p), V2[-1] ** (1 / q)
    rhs = sewing_constant(p) * (xp * cp.remainder_qvar(q, (s, t)) + cp.derivative_pvar(p, (s, t)) * Xq)
    return lhs, rhs
