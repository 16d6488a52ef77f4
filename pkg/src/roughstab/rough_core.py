"""Grid-sampled rough paths: construction, increments, fBm sampling and shifts.

A :class:`RoughPath` stores the first level ``x_{t_j}`` and the second level
anchored at the grid start, ``X_{t_0, t_j}``.  Every other second-level
increment is reconstructed through Chen's relation::

    X_{s,t} = X_{t0,t} - X_{t0,s} - x_{t0,s} (x) x_{s,t}

so the representation costs O(n m^2) memory and is Chen-consistent by
construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionError,
    DomainError,
    InputError,
    RoughRegimeWarning,
    SamplerError,
    UnsupportedError,
)

MAX_LIFT_LEVEL = 12
CHOLESKY_MAX_POINTS = 2048


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class TimeGrid:
    """Strictly increasing, finite sequence of at least two times."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1)
        if pts.size < 2:
            raise InputError("a time grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InputError("time grid contains non-finite values")
        if np.any(np.diff(pts) <= 0):
            raise InputError("time grid must be strictly increasing")
        self._points = _readonly(pts)

    @classmethod
    def uniform(cls, start, stop, n):
        """``n`` equal steps from ``start`` to ``stop`` (``n + 1`` points)."""
        if int(n) < 1:
            raise InputError("uniform grid needs n >= 1 steps")
        return cls(np.linspace(start, stop, int(n) + 1))

    @property
    def points(self):
        return self._points

    @property
    def start(self):
        return float(self._points[0])

    @property
    def end(self):
        return float(self._points[-1])

    @property
    def steps(self):
        return np.diff(self._points)

    def __len__(self):
        return self._points.size

    def __repr__(self):
        return f"TimeGrid(n={len(self)}, [{self.start:g}, {self.end:g}])"

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self._points, other._points)

    __hash__ = None

    def is_uniform(self, rtol=1e-9):
        h = self.steps
        return bool(np.all(np.abs(h - h.mean()) <= rtol * h.mean()))

    def _tol(self):
        return 1e-9 * float(self.steps.min())

    def index(self, t):
        """Index of grid time ``t``; raises :class:`DomainError` when off-grid."""
        t = float(t)
        j = int(np.searchsorted(self._points, t))
        best = None
        for k in (j - 1, j):
            if 0 <= k < len(self) and abs(self._points[k] - t) <= self._tol():
                best = k
        if best is None:
            raise DomainError(f"time {t!r} is not a grid point of {self!r}")
        return best

    def contains(self, t):
        try:
            self.index(t)
        except DomainError:
            return False
        return True

    def slice(self, i0, i1):
        """Sub-grid of indices ``i0..i1`` inclusive."""
        return TimeGrid(self._points[i0:i1 + 1])

    def refine(self, level):
        """Split every step into ``2**level`` equal sub-steps."""
        k = 2 ** int(level)
        if k == 1:
            return self
        a = self._points[:-1, None]
        h = self.steps[:, None]
        fine = (a + h * (np.arange(k)[None, :] / k)).reshape(-1)
        return TimeGrid(np.append(fine, self._points[-1]))


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


class RoughPath:
    """First level plus anchored second level on a :class:`TimeGrid`.

    ``first_level`` has shape ``(n, m)``; ``second_level`` has shape
    ``(n, m, m)`` and holds ``X_{t0, t_j}`` with ``second_level[0] == 0``.
    Instances are immutable.
    """

    def __init__(self, grid, first_level, second_level, p=2.5, meta=None):
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(grid)
        x = np.asarray(first_level, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        X = np.asarray(second_level, dtype=float)
        n = len(grid)
        if x.ndim != 2 or x.shape[0] != n:
            raise DimensionError(f"first level must have shape ({n}, m), got {x.shape}")
        m = x.shape[1]
        if X.shape != (n, m, m):
            raise DimensionError(f"second level must have shape ({n}, {m}, {m}), got {X.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(X))):
            raise InputError("rough path contains non-finite values")
        if np.any(X[0] != 0.0):
            raise InputError("anchored second level must vanish at the grid start")
        self.grid = grid
        self._x = _readonly(x)
        self._X = _readonly(X)
        self.p = float(p)
        self.meta = dict(meta or {})

    @property
    def dim(self):
        return self._x.shape[1]

    @property
    def times(self):
        return self.grid.points

    @property
    def first_level(self):
        return self._x

    @property
    def second_level(self):
        return self._X

    def __len__(self):
        return len(self.grid)

    def __repr__(self):
        return f"RoughPath(m={self.dim}, n={len(self)}, [{self.grid.start:g}, {self.grid.end:g}], p={self.p:g})"

    # index-based access; the public time-based API is in module functions

    def x_inc(self, i, j):
        return self._x[j] - self._x[i]

    def X_inc(self, i, j):
        """Second-level increment between grid indices (broadcasts over arrays)."""
        x0 = self._x[0]
        xi = self._x[i]
        return self._X[j] - self._X[i] - _outer(xi - x0, self._x[j] - xi)

    def restrict(self, a, b):
        """The same rough path on ``[a, b]``, re-anchored at ``a``."""
        i0, i1 = self.grid.index(a), self.grid.index(b)
        if i1 <= i0:
            raise DomainError("restrict needs a < b")
        return self.restrict_idx(i0, i1)

    def restrict_idx(self, i0, i1):
        j = np.arange(i0, i1 + 1)
        X = self.X_inc(i0, j)
        X[0] = 0.0
        return RoughPath(self.grid.slice(i0, i1), self._x[i0:i1 + 1], X, self.p, self.meta)

    def subsample(self, indices):
        """Keep the grid points ``indices`` (must start at 0 and increase)."""
        idx = np.asarray(indices, dtype=int)
        if idx[0] != 0:
            return self.restrict_idx(int(idx[0]), int(idx[-1])).subsample(idx - idx[0])
        return RoughPath(TimeGrid(self.times[idx]), self._x[idx], self._X[idx], self.p, self.meta)

    def scaled(self, c):
        """Dilation ``(c x, c^2 X)``; keeps Chen's relation and the geometric property."""
        return RoughPath(self.grid, c * self._x, c * c * self._X, self.p, self.meta)


def increment(rp, s, t):
    """``(x_{s,t}, X_{s,t})`` for grid times ``s <= t``."""
    i, j = rp.grid.index(s), rp.grid.index(t)
    if i > j:
        raise DomainError(f"increment needs s <= t, got s={s}, t={t}")
    if i == j:
        m = rp.dim
        return np.zeros(m), np.zeros((m, m))
    return rp.x_inc(i, j), rp.X_inc(i, j)


def chen_defect(rp, s, u, t):
    """``X_{s,t} - X_{s,u} - X_{u,t} - x_{s,u} (x) x_{u,t}``; zero up to rounding."""
    i, k, j = rp.grid.index(s), rp.grid.index(u), rp.grid.index(t)
    if not i <= k <= j:
        raise DomainError("chen_defect needs s <= u <= t")
    return _chen_defect_idx(rp, i, k, j)


def _chen_defect_idx(rp, i, k, j):
    return rp.X_inc(i, j) - rp.X_inc(i, k) - rp.X_inc(k, j) - _outer(rp.x_inc(i, k), rp.x_inc(k, j))


def max_chen_defect(rp, triples):
    """Largest Frobenius-norm Chen defect over index triples ``(i, k, j)``."""
    tr = np.asarray(triples, dtype=int)
    d = _chen_defect_idx(rp, tr[:, 0], tr[:, 1], tr[:, 2])
    return float(np.sqrt((d ** 2).sum(axis=(-2, -1))).max())


def symmetry_defect(rp, i, j):
    """``||Sym(X_{s,t}) - 1/2 x_{s,t} (x) x_{s,t}||`` for index pairs."""
    X = rp.X_inc(i, j)
    dx = rp.x_inc(i, j)
    sym = 0.5 * (X + np.swapaxes(X, -1, -2))
    d = sym - 0.5 * _outer(dx, dx)
    return np.sqrt((d ** 2).sum(axis=(-2, -1)))


def levy_area(X):
    """Antisymmetric part of a second-level array."""
    return 0.5 * (X - np.swapaxes(X, -1, -2))


def lift_piecewise_linear(samples, grid, p=2.5, meta=None):
    """Exact iterated integral of the piecewise-linear interpolant.

    Over one segment ``[u, v]`` the anchored second level grows by
    ``x_{t0,u} (x) x_{u,v} + 1/2 x_{u,v} (x) x_{u,v}``.
    """
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != len(grid):
        raise DimensionError(f"{x.shape[0]} samples for a grid of {len(grid)} points")
    if not np.all(np.isfinite(x)):
        raise InputError("samples contain non-finite values")
    dx = np.diff(x, axis=0)
    rel = x[:-1] - x[0]
    contrib = _outer(rel, dx) + 0.5 * _outer(dx, dx)
    X = np.concatenate([np.zeros((1,) + contrib.shape[1:]), np.cumsum(contrib, axis=0)])
    return RoughPath(grid, x, X, p, meta)


@dataclass(frozen=True)
class FbmSpec:
    """Everything that determines one fBm realization.

    ``scale`` multiplies the sampled path; it exists so homogeneity of norms
    can be checked through the sampler.  ``method`` is ``"auto"``,
    ``"circulant"`` or ``"cholesky"``.
    """

    hurst: float
    dim: int
    seed: int
    grid: TimeGrid = field(compare=False)
    lift_level: int = 6
    p: float = 2.5
    scale: float = 1.0
    method: str = "auto"

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise DomainError(f"Hurst exponent must lie in (0, 1), got {self.hurst}")
        if not 1.0 / 3.0 < self.hurst <= 0.5:
            warnings.warn(
                f"H={self.hurst} is outside the rough regime (1/3, 1/2]",
                RoughRegimeWarning,
                stacklevel=3,
            )
        if int(self.dim) < 1:
            raise DomainError("dim must be >= 1")
        if not 0 <= int(self.lift_level) <= MAX_LIFT_LEVEL:
            raise DomainError(f"lift_level must be in [0, {MAX_LIFT_LEVEL}]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.method not in ("auto", "circulant", "cholesky"):
            raise DomainError(f"unknown sampling method {self.method!r}")
        if not isinstance(self.grid, TimeGrid):
            object.__setattr__(self, "grid", TimeGrid(self.grid))

    def with_(self, **kw):
        return replace(self, **kw)

    def header(self):
        return {
            "hurst": self.hurst,
            "seed": int(self.seed),
            "lift_level": int(self.lift_level),
            "scale": self.scale,
        }


def make_rng(seed):
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def fgn_autocovariance(hurst, k):
    k = np.abs(np.asarray(k, dtype=float))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)


def circulant_eigenvalues(hurst, n):
    """Eigenvalues of the size-``2n`` circulant embedding of unit-step fGn."""
    gam = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([gam, gam[-2:0:-1]])
    return np.fft.fft(row).real


def _fgn_circulant(hurst, n, m, rng):
    lam = circulant_eigenvalues(hurst, n)
    if lam.min() < -1e-10 * lam.max():
        raise SamplerError(
            f"circulant embedding is not positive semidefinite (min eigenvalue {lam.min():.3e}); "
            "use method='cholesky'"
        )
    M = lam.size
    w = np.sqrt(np.clip(lam, 0.0, None) / M)
    out = np.empty((n, m))
    # one complex FFT yields two independent exact samples (real and imaginary parts)
    for c in range(0, m, 2):
        xi = rng.standard_normal((2, M))
        y = np.fft.fft(w * (xi[0] + 1j * xi[1]))
        out[:, c] = y.real[:n]
        if c + 1 < m:
            out[:, c + 1] = y.imag[:n]
    return out


def fbm_covariance(hurst, times):
    """``E[B_s B_t] = 1/2 (s^{2H} + t^{2H} - |t - s|^{2H})`` for ``s, t >= 0``."""
    t = np.asarray(times, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (t[:, None] ** h2 + t[None, :] ** h2 - np.abs(t[:, None] - t[None, :]) ** h2)


def _fbm_cholesky(hurst, grid, m, rng):
    tau = grid.points[1:] - grid.start
    cov = fbm_covariance(hurst, tau)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SamplerError(
            "fBm covariance is numerically not positive definite; "
            "use a uniform grid with method='circulant'"
        ) from exc
    z = rng.standard_normal((tau.size, m))
    return np.vstack([np.zeros((1, m)), L @ z])


def sample_fbm(spec):
    """fBm values on ``spec.grid`` with ``x_{t0} = 0``, shape ``(n, m)``.

    Uniform grids use the circulant embedding (exact in law, O(n log n));
    otherwise a dense Cholesky factor of the covariance of ``B_{t - t0}``.
    """
    grid = spec.grid
    m = int(spec.dim)
    rng = make_rng(spec.seed)
    method = spec.method
    if method == "auto":
        if grid.is_uniform():
            method = "circulant"
        elif len(grid) <= CHOLESKY_MAX_POINTS:
            method = "cholesky"
        else:
            raise UnsupportedError(
                f"non-uniform grid with {len(grid)} points exceeds the Cholesky limit "
                f"({CHOLESKY_MAX_POINTS}); the fast sampler needs a uniform grid"
            )
    if method == "circulant":
        if not grid.is_uniform():
            raise UnsupportedError("the circulant sampler needs a uniform grid")
        n = len(grid) - 1
        dt = (grid.end - grid.start) / n
        inc = _fgn_circulant(spec.hurst, n, m, rng) * dt ** spec.hurst
        path = np.vstack([np.zeros((1, m)), np.cumsum(inc, axis=0)])
    else:
        path = _fbm_cholesky(spec.hurst, grid, m, rng)
    return spec.scale * path


def lift_refined(fine_samples, fine_grid, level, p=2.5, meta=None):
    """Lift on a dyadically refined grid and keep every ``2**level``-th point."""
    rp = lift_piecewise_linear(fine_samples, fine_grid, p, meta)
    k = 2 ** int(level)
    if (len(fine_grid) - 1) % k:
        raise DimensionError("fine grid is not a 2**level refinement")
    return rp.subsample(np.arange(0, len(fine_grid), k))


def sample_fbm_rough(spec):
    """Geometric fBm rough path on ``spec.grid``.

    The fBm is sampled on the grid refined ``lift_level`` times, lifted
    piecewise-linearly there, and restricted to the requested grid; the
    second level therefore carries the Levy area accumulated over the fine
    steps.
    """
    fine = spec.grid.refine(spec.lift_level)
    samples = sample_fbm(spec.with_(grid=fine))
    meta = dict(spec.header(), kind="fbm")
    return lift_refined(samples, fine, spec.lift_level, spec.p, meta)


def wiener_shift(rp, h, window=None):
    """The shifted realization ``theta_h`` on a translated grid.

    The result lives on ``{t - h}`` with first level ``x_{h+t} - x_h`` (so it
    vanishes at time 0) and the same increments as ``rp``:
    ``increment(shifted, s, t) == increment(rp, s + h, t + h)``.  ``window``
    optionally restricts the output to ``[s, t]`` in shifted time.
    """
    ih = rp.grid.index(h)
    xh = rp.first_level[ih]
    times = rp.times - float(rp.times[ih])
    out = RoughPath(TimeGrid(times), rp.first_level - xh, rp.second_level, rp.p, rp.meta)
    if window is not None:
        s, t = window
        if not (out.grid.contains(s) and out.grid.contains(t)):
            raise DomainError(f"shift window {window} leaves the realization support")
        out = out.restrict(s, t)
    return out
