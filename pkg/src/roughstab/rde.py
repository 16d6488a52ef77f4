"""Rough differential equations ``dy = [A y + f(y)] dt + g(y) dx``.

The solver is the controlled Euler (Davie) scheme

    y_{u,v} = (A y_u + f(y_u)) (v - u) + g(y_u) x_{u,v} + [Dg(y_u) g(y_u)] : X_{u,v}

which is the compensated Riemann sum of the integral form.  Besides the
solver this module evaluates the variation-of-constants representation and
the pathwise a priori bounds for the solution and for differences of
solutions.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    ConfigError,
    ConstantAuditWarning,
    DimensionError,
    DivergenceError,
    DomainError,
    StepSizeWarning,
)
from .gubinelli import ControlledPath, SmoothFunction, sewing_constant
from .rough_core import RoughPath
from .variation import gamma_or_inf, greedy_times, vec_norm

DIVERGENCE_GUARD = 1e8


def matrix_semigroup(A, t):
    """``Phi(t) = exp(A t)`` by scaling and squaring; ``t`` may be an array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"matrix_semigroup needs a square matrix, got shape {A.shape}")
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return expm(A * float(t))
    return np.stack([expm(A * float(s)) for s in t.ravel()]).reshape(t.shape + A.shape)


class LipschitzFunction:
    """Drift nonlinearity ``f: R^d -> R^d`` with declared Lipschitz constant ``C_f``."""

    def __init__(self, value, C_f, d, name="f", vectorized=True):
        self._value = value
        self.C_f = float(C_f)
        self.d = int(d)
        self.name = name
        self.vectorized = vectorized

    def __repr__(self):
        return f"LipschitzFunction({self.name}, C_f={self.C_f:g})"

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.vectorized or y.ndim == 1:
            return np.asarray(self._value(y), dtype=float)
        flat = y.reshape(-1, y.shape[-1])
        return np.stack([np.asarray(self._value(v), dtype=float) for v in flat]).reshape(y.shape)

    @property
    def at_zero_norm(self):
        return float(np.linalg.norm(self(np.zeros(self.d))))


def zero_drift(d):
    return LipschitzFunction(lambda y: np.zeros_like(y), 0.0, d, "zero")


def constant_drift(c, d):
    c = np.broadcast_to(np.asarray(c, dtype=float), (d,)).copy()
    return LipschitzFunction(lambda y: np.broadcast_to(c, np.shape(y)).copy(), 0.0, d, "const")


def linear_drift(scale, d, shift=0.0):
    """``f(y) = scale * y + shift`` componentwise."""
    return LipschitzFunction(lambda y: scale * np.asarray(y) + shift, abs(scale), d, "linear")


def sine_drift(scale, d, shift=0.0):
    """``f(y) = scale * sin(y) + shift`` componentwise."""
    return LipschitzFunction(lambda y: scale * np.sin(y) + shift, abs(scale), d, "sin")


def audit_lipschitz(f, points, warn=True):
    """Largest sampled difference quotient of ``f`` divided by ``C_f``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fx = f(pts)
    worst = 0.0
    for i in range(len(pts) - 1):
        dy = np.linalg.norm(pts[i + 1:] - pts[i], axis=1)
        df = np.linalg.norm(fx[i + 1:] - fx[i], axis=1)
        ok = dy > 0
        if ok.any():
            worst = max(worst, float((df[ok] / dy[ok]).max()))
    ratio = worst / f.C_f if f.C_f > 0 else (math.inf if worst > 1e-14 else 0.0)
    if warn and ratio > 1 + 1e-9:
        warnings.warn(f"{f!r}: sampled difference quotient {worst:g} exceeds C_f", ConstantAuditWarning,
                      stacklevel=2)
    return ratio


@dataclass
class RdeProblem:
    """``dy = [A y + f(y)] dt + g(y) dx`` with ``y`` in ``R^d`` and ``x`` in ``R^m``."""

    A: np.ndarray
    f: LipschitzFunction
    g: SmoothFunction
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        self.A = A
        d = A.shape[0]
        if self.f.d != d:
            raise DimensionError(f"f acts on R^{self.f.d} but A is {d}x{d}")
        if len(self.g.out_shape) != 2 or self.g.out_shape[0] != d:
            raise DimensionError(f"g must map R^{d} to R^({d} x m), got output shape {self.g.out_shape}")

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.g.out_shape[1]

    @property
    def A_norm(self):
        return float(np.linalg.norm(self.A, 2))

    @property
    def C_f(self):
        return self.f.C_f

    @property
    def C_g(self):
        return self.g.C_g

    @property
    def L(self):
        """``||A|| + C_f``."""
        return self.A_norm + self.C_f

    @property
    def f0_norm(self):
        return self.f.at_zero_norm

    @property
    def g0_norm(self):
        return float(vec_norm(self.g(np.zeros(self.d)), 2))

    @property
    def kind(self):
        return self.g.kind

    def spectral_abscissa(self):
        return float(np.linalg.eigvals(self.A).real.max())

    def is_hurwitz(self):
        return self.spectral_abscissa() < 0


@dataclass
class Solution:
    """Trajectory on a grid with its controlled structure ``y' = g(y)``."""

    values: np.ndarray
    derivative: np.ndarray
    reference: RoughPath
    meta: dict = field(default_factory=dict)
    _records: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self):
        return self.reference.grid

    @property
    def times(self):
        return self.reference.times

    def controlled(self):
        return ControlledPath(self.reference, self.values, self.derivative)

    def sup_norm(self, interval=None):
        i0, i1 = self._idx(interval)
        return float(np.linalg.norm(self.values[i0:i1 + 1], axis=1).max())

    def _idx(self, interval):
        if interval is None:
            return 0, len(self.values) - 1
        return self.grid.index(interval[0]), self.grid.index(interval[1])

    def pvar_norm(self, p, interval=None):
        """``|||y, R|||_{p-var} = |||y|||_{p-var} + |||R^y|||_{q-var}``."""
        cp = self.controlled()
        return cp.value_pvar(p, interval) + cp.remainder_qvar(p / 2.0, interval)

    def norm_records(self, p=None):
        """``|||y, R|||`` on every unit interval ``[k, k+1]`` inside the solve range (cached)."""
        p = self.reference.p if p is None else p
        if p not in self._records:
            rows = []
            k = math.ceil(self.grid.start - 1e-12)
            while k + 1 <= self.grid.end + 1e-12:
                if self.grid.contains(k) and self.grid.contains(k + 1):
                    rows.append({"interval": [float(k), float(k + 1)], "norm": self.pvar_norm(p, (k, k + 1))})
                k += 1
            self._records[p] = rows
        return self._records[p]

    def write_csv(self, path):
        d = self.values.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"y{i + 1}" for i in range(d)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    def sidecar(self, p=None):
        return {"scheme": self.meta, "norm_records": self.norm_records(p)}

    def write(self, stem, extra=None, p=None):
        self.write_csv(f"{stem}.csv")
        side = self.sidecar(p)
        if extra:
            side.update(extra)
        with open(f"{stem}.json", "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)


def _span(rp, interval):
    if interval is None:
        return 0, len(rp) - 1
    i0, i1 = rp.grid.index(interval[0]), rp.grid.index(interval[1])
    if i1 <= i0:
        raise DomainError(f"solve interval {interval} must have positive length")
    return i0, i1


def _step_increments(rp, i0, i1):
    u = np.arange(i0, i1)
    return np.diff(rp.times[i0:i1 + 1]), rp.x_inc(u, u + 1), rp.X_inc(u, u + 1)


def _check_steps(prob, rp, dx, XX):
    C_p = sewing_constant(rp.p) if 2 < rp.p < 3 else None
    if C_p is None or prob.C_g == 0:
        return
    q = rp.p / 2.0
    step = (vec_norm(dx) ** rp.p + vec_norm(XX, 2) ** q) ** (1.0 / rp.p)
    gam = gamma_or_inf(C_p, prob.C_g)
    if step.max() >= gam:
        warnings.warn(f"largest one-step rough norm {step.max():.3g} reaches the greedy threshold {gam:.3g}; "
                      "refine the grid", StepSizeWarning, stacklevel=3)


SCHEMES = ("euler", "exponential")


def solve_batch(prob, rp, Y0, interval=None, guard=DIVERGENCE_GUARD, on_divergence="raise", check_steps=True,
                scheme="euler"):
    """Run the scheme for every row of ``Y0`` on one noise realization.

    Returns ``(values, diverged)`` with values of shape ``(n, B, d)``.  With
    ``on_divergence="mask"`` members whose norm exceeds ``guard`` are set to
    NaN and flagged instead of aborting the run.

    ``scheme="exponential"`` treats the linear part exactly,
    ``y_v = Phi(v - u) [y_u + f(y_u)(v - u) + g(y_u) x_{u,v} + Dg g : X_{u,v}]``,
    which reproduces the linear flow ``e^{A t}`` without step error.
    """
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
    if Y0.shape[1] != prob.d:
        raise DimensionError(f"initial values must lie in R^{prob.d}")
    if rp.dim != prob.m:
        raise DimensionError(f"problem expects {prob.m} noise channels, rough path has {rp.dim}")
    if on_divergence not in ("raise", "mask"):
        raise DomainError(f"on_divergence must be 'raise' or 'mask', got {on_divergence!r}")
    i0, i1 = _span(rp, interval)
    h, dx, XX = _step_increments(rp, i0, i1)
    if check_steps:
        _check_steps(prob, rp, dx, XX)
    AT = prob.A.T
    f, g = prob.f, prob.g
    expo = scheme == "exponential"
    if expo:
        uniform = np.allclose(h, h[0], rtol=1e-12, atol=0.0)
        PhT = matrix_semigroup(prob.A, h[0]).T if uniform else None
    out = np.empty((i1 - i0 + 1,) + Y0.shape)
    out[0] = Y0
    y = Y0.copy()
    diverged = np.zeros(Y0.shape[0], dtype=bool)
    with np.errstate(invalid="ignore", over="ignore"):
        for n in range(i1 - i0):
            G = g(y)
            DgG = np.einsum("bikj,bjl->bikl", g.jacobian(y), G)
            rough = np.einsum("bik,k->bi", G, dx[n]) + np.einsum("bikl,lk->bi", DgG, XX[n])
            if expo:
                E = PhT if uniform else matrix_semigroup(prob.A, h[n]).T
                y = (y + f(y) * h[n] + rough) @ E
            else:
                y = y + (y @ AT + f(y)) * h[n] + rough
            bad = ~(np.linalg.norm(y, axis=1) <= guard) & ~diverged
            if bad.any():
                t = float(rp.times[i0 + n + 1])
                if on_divergence == "raise":
                    raise DivergenceError(f"solution norm exceeded {guard:g} at t={t:g} "
                                          f"(members {np.flatnonzero(bad).tolist()})")
                diverged |= bad
                y[bad] = np.nan
            out[n + 1] = y
    return out, diverged


def solve(prob, rp, y0, interval=None, guard=DIVERGENCE_GUARD, check_steps=True, scheme="euler"):
    """Solve on ``interval`` (default the whole grid) from ``y0`` at its left end."""
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    i0, i1 = _span(rp, interval)
    vals, _ = solve_batch(prob, rp, y0[None, :], interval, guard, "raise", check_steps, scheme)
    values = vals[:, 0, :]
    ref = rp.restrict_idx(i0, i1) if (i0, i1) != (0, len(rp) - 1) else rp
    meta = {"scheme": f"controlled-{scheme}", "order": 2, "steps": i1 - i0, "g_kind": prob.kind}
    return Solution(values, prob.g(values), ref, meta)


def solve_affine(prob, rp, y0, interval=None, guard=DIVERGENCE_GUARD, check_steps=True, scheme="euler"):
    """:func:`solve` restricted to affine ``g(y) = C y + g(0)`` (where ``Dg g = C (C y + g(0))``)."""
    if prob.kind != "affine":
        raise ConfigError("solve_affine needs an affine diffusion coefficient")
    return solve(prob, rp, y0, interval, guard, check_steps, scheme)


def coupled_solve(prob, rp, y0_a, y0_b, interval=None, guard=DIVERGENCE_GUARD, scheme="euler"):
    """Both solutions of a coupled run, as two :class:`Solution` objects."""
    i0, i1 = _span(rp, interval)
    vals, _ = solve_batch(prob, rp, np.stack([np.ravel(y0_a), np.ravel(y0_b)]), interval, guard,
                          check_steps=False, scheme=scheme)
    ref = rp.restrict_idx(i0, i1) if (i0, i1) != (0, len(rp) - 1) else rp
    meta = {"scheme": f"controlled-{scheme}", "order": 2, "steps": i1 - i0}
    return tuple(Solution(vals[:, k, :], prob.g(vals[:, k, :]), ref, dict(meta)) for k in (0, 1))


def difference_solve(prob, rp, y0_a, y0_b, interval=None, guard=DIVERGENCE_GUARD, scheme="euler"):
    """``z = y(y0_b) - y(y0_a)`` from one coupled run, with ``z' = g(y_b) - g(y_a)``."""
    sa, sb = coupled_solve(prob, rp, y0_a, y0_b, interval, guard, scheme)
    meta = dict(sa.meta, scheme=sa.meta["scheme"] + " difference")
    return Solution(sb.values - sa.values, sb.derivative - sa.derivative, sa.reference, meta)


def variation_of_constants_residual(sol, prob, mode="recursion"):
    """``max_n ||y_n - V_n||`` where ``V`` is the variation-of-constants right side.

    ``V_n = Phi(t_n - a) y_a + int Phi(t_n - s) f(y_s) ds + int Phi(t_n - s) g(y_s) dx_s``
    with the trapezoidal rule in time and the compensated sum for the rough
    integral, whose integrand ``Phi(t_n - .) g(y)`` has derivative
    ``Phi(t_n - .) Dg(y) g(y)``.  ``mode="recursion"`` propagates the sums
    with one-step semigroup factors; ``mode="direct"`` evaluates the double
    sums literally (O(n^2), for cross-checking).
    """
    rp = sol.reference
    y = sol.values
    n = len(y)
    times = rp.times
    h, dx, XX = _step_increments(rp, 0, n - 1)
    F = prob.f(y)
    G = prob.g(y)
    DgG = np.einsum("nikj,njl->nikl", prob.g.jacobian(y), G)
    noise = np.einsum("nik,nk->ni", G[:-1], dx) + np.einsum("nikl,nlk->ni", DgG[:-1], XX)
    V = np.empty_like(y)
    V[0] = y[0]
    if mode == "recursion":
        uniform = rp.grid.is_uniform()
        Ph = matrix_semigroup(prob.A, h[0]) if uniform else None
        D = np.zeros(prob.d)
        S = np.zeros(prob.d)
        P = np.eye(prob.d)
        for k in range(n - 1):
            E = Ph if uniform else matrix_semigroup(prob.A, h[k])
            D = E @ D + 0.5 * h[k] * (E @ F[k] + F[k + 1])
            S = E @ (S + noise[k])
            P = E @ P
            V[k + 1] = P @ y[0] + D + S
    elif mode == "direct":
        for j in range(1, n):
            Phi = matrix_semigroup(prob.A, times[j] - times[:j + 1])
            drift = 0.5 * h[:j, None] * (np.einsum("kab,kb->ka", Phi[:j], F[:j])
                                         + np.einsum("kab,kb->ka", Phi[1:j + 1], F[1:j + 1]))
            rough = np.einsum("kab,kb->ka", Phi[:j], noise[:j])
            V[j] = Phi[0] @ y[0] + drift.sum(axis=0) + rough.sum(axis=0)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    return float(np.linalg.norm(y - V, axis=1).max())


# ---------------------------------------------------------------- a priori bounds

def _ratio(a, b):
    """``a / b`` with ``0 / 0 = 0`` (a vanishing quantity over a vanishing constant)."""
    if a == 0:
        return 0.0
    return math.inf if b == 0 else a / b


def estx_bound(ya, f0, L, C_p, N, length):
    """Sup-norm bound for bounded ``g``."""
    return (ya + (_ratio(f0, L) + 1.0 / C_p) * N) * math.exp(4.0 * L * length)


def estx2_bound(ya, f0, L, C_p, N, length, p):
    """Bound on ``||y_a|| + |||y, R|||_{p-var}`` for bounded ``g``."""
    return estx_bound(ya, f0, L, C_p, N, length) * N ** ((p - 1.0) / p)


def linear_m0(C_p, g0, C_norm, f0, C_f):
    """``M_0 = (1 + 3 / (2 C_p)) ||g(0)|| / ||C|| + ||f(0)|| / C_f``."""
    return (1.0 + 1.5 / C_p) * _ratio(g0, C_norm) + _ratio(f0, C_f)


def linear_alpha(C_p):
    return math.log(1.0 + 1.5 / C_p)


def estxlin_bounds(ya, M0, C_f, L, C_p, N, length, p):
    """(sup bound, p-var bound) for affine ``g``."""
    sup = (ya + M0 * N) * math.exp(4.0 * C_f * length + L * N)
    pv = (ya + M0 * N) * math.exp(4.0 * C_f * length + linear_alpha(C_p) * N) * N ** ((p - 1.0) / p)
    return sup, pv


def lambda_value(ya, yb, f0, C_f, C_p, L, N, length, p):
    """``Lambda = 1 + 2 [max(||y_a||, ||y~_a||) + (||f(0)|| / C_f + 1 / C_p) N] e^{4L(b-a)} N^{(p-1)/p}``."""
    return 1.0 + 2.0 * (max(ya, yb) + (_ratio(f0, C_f) + 1.0 / C_p) * N) * math.exp(4.0 * L * length) \
        * N ** ((p - 1.0) / p)


def roughest4_bound(za, L, length, C_p, C_g, lam, xnorm, p):
    """Bound on ``||z_a|| + |||z, R|||_{p-var}`` for the difference of two solutions."""
    return za * math.exp(4.0 * L * length) * (1.0 + (8.0 * C_p * C_g * lam) ** (p - 1.0) * xnorm ** (p - 1.0))


def general_m0(prob, C_p):
    """Constant in front of the inhomogeneous terms for bounded ``g``."""
    f0, L = prob.f0_norm, prob.L
    return max(_ratio(f0, L) + 1.0 / C_p, _ratio(prob.g0_norm, prob.C_g) + f0)


def problem_m0(prob, C_p):
    if prob.kind == "affine":
        return linear_m0(C_p, prob.g0_norm, prob.C_g, prob.f0_norm, prob.C_f)
    return general_m0(prob, C_p)


@dataclass
class AprioriReport:
    """Right-hand sides of the a priori bounds next to the measured left-hand sides."""

    interval: tuple
    p: float
    C_p: float
    gamma: float
    N: int
    rough_norm: float
    L: float
    kind: str
    bounds: dict
    measured: dict
    Lambda: float | None = None

    def checks(self):
        return {k: (self.measured[k], self.bounds[k], self.measured[k] <= self.bounds[k])
                for k in self.bounds if k in self.measured}

    def satisfied(self):
        return all(ok for _, _, ok in self.checks().values())

    def to_dict(self):
        return {
            "interval": list(self.interval), "p": self.p, "C_p": self.C_p,
            "gamma": None if math.isinf(self.gamma) else self.gamma, "N": self.N,
            "rough_norm": self.rough_norm, "L": self.L, "kind": self.kind, "Lambda": self.Lambda,
            "checks": {k: {"measured": a, "bound": b, "ok": bool(ok)} for k, (a, b, ok) in self.checks().items()},
        }


def apriori_bounds(prob, rp, y0, interval=None, y0_b=None, p=None, sol=None):
    """Evaluate the applicable a priori bounds on ``[a, b]`` and measure the solution.

    Bounded ``g`` uses the sup-norm and p-variation bounds with
    ``L = ||A|| + C_f``; affine ``g`` uses the bounds with ``M_0`` and
    ``alpha = log(1 + 3 / (2 C_p))``.  When ``y0_b`` is given the difference
    bound with ``Lambda`` is added.  ``N`` is the greedy count at
    ``gamma = 1 / (4 C_p C_g)``.
    """
    p = rp.p if p is None else p
    if not 2 < p < 3:
        raise ConfigError(f"a priori bounds need 2 < p < 3, got {p}")
    i0, i1 = _span(rp, interval)
    a, b = float(rp.times[i0]), float(rp.times[i1])
    length = b - a
    C_p = sewing_constant(p)
    gam = gamma_or_inf(C_p, prob.C_g)
    part = greedy_times(rp, gam, p, (a, b))
    N = part.count
    xnorm = part.total_norm
    L, f0, C_f = prob.L, prob.f0_norm, prob.C_f
    if sol is None:
        sol = solve(prob, rp, y0, (a, b), check_steps=False)
    ya = float(np.linalg.norm(sol.values[0]))
    measured = {"sup": sol.sup_norm(), "pvar": ya + sol.pvar_norm(p)}
    bounds = {}
    if prob.kind == "affine":
        M0 = linear_m0(C_p, prob.g0_norm, prob.C_g, f0, C_f)
        bounds["sup"], bounds["pvar"] = estxlin_bounds(ya, M0, C_f, L, C_p, N, length, p)
    else:
        bounds["sup"] = estx_bound(ya, f0, L, C_p, N, length)
        bounds["pvar"] = estx2_bound(ya, f0, L, C_p, N, length, p)
    lam = None
    if y0_b is not None:
        yb = float(np.linalg.norm(y0_b))
        lam = lambda_value(ya, yb, f0, C_f, C_p, L, N, length, p)
        zsol = difference_solve(prob, rp, y0, y0_b, (a, b))
        za = float(np.linalg.norm(zsol.values[0]))
        measured["difference"] = za + zsol.pvar_norm(p)
        bounds["difference"] = roughest4_bound(za, L, length, C_p, prob.C_g, lam, xnorm, p)
    return AprioriReport((a, b), p, C_p, gam, N, xnorm, L, prob.kind, bounds, measured, lam)
