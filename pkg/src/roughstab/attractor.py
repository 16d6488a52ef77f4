"""Stability criteria, bound weights and attractor experiments.

Everything here works on unit windows ``[k, k+1]`` of one noise realization.
Shift invariance of the rough norms means a window of the shifted path
``theta_{-k} x`` on ``[0, 1]`` is the window ``[-k, -k+1]`` of ``x``, so no
shifted copies are materialized.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .gubinelli import sewing_constant
from .rde import (
    Solution,
    coupled_solve,
    lambda_value,
    linear_alpha,
    matrix_semigroup,
    problem_m0,
    solve_batch,
)
from .rough_core import FbmSpec, RoughPath, TimeGrid, make_rng, sample_fbm_rough
from .variation import gamma_or_inf, greedy_times, rough_pvar_norm

SINGLETON_RTOL = 1e-6


@dataclass(frozen=True)
class StabilityParams:
    """Constants entering the criteria; ``L = ||A|| + C_f`` and ``L_f = C_A C_f``."""

    C_A: float
    lambda_A: float
    A_norm: float
    C_f: float
    C_g: float
    p: float = 2.5
    Gamma: float | None = None
    Gamma_se: float = 0.0

    def __post_init__(self):
        if not self.C_A >= 1.0:
            raise ConfigError(f"C_A must be >= 1, got {self.C_A}")
        if not self.lambda_A > 0:
            raise ConfigError(f"lambda_A must be positive, got {self.lambda_A}")
        for name in ("A_norm", "C_f", "C_g"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 2 < self.p < 3:
            raise ConfigError(f"p must lie in (2, 3), got {self.p}")

    @classmethod
    def from_problem(cls, prob, C_A, lambda_A, p=2.5, Gamma=None, Gamma_se=0.0):
        return cls(C_A, lambda_A, prob.A_norm, prob.C_f, prob.C_g, p, Gamma, Gamma_se)

    def with_(self, **kw):
        vals = asdict(self)
        vals.update(kw)
        return StabilityParams(**vals)

    @property
    def C_p(self):
        return sewing_constant(self.p)

    @property
    def L(self):
        return self.A_norm + self.C_f

    @property
    def L_f(self):
        return self.C_A * self.C_f

    @property
    def rate(self):
        """``lambda = lambda_A - L_f``, the decay rate used in the pullback estimates."""
        return self.lambda_A - self.L_f

    @property
    def alpha(self):
        return linear_alpha(self.C_p)

    @property
    def gamma(self):
        """Greedy threshold ``1 / (4 C_p C_g)`` (``inf`` without noise)."""
        return gamma_or_inf(self.C_p, self.C_g)

    def to_dict(self):
        d = asdict(self)
        d.update(C_p=self.C_p, L=self.L, L_f=self.L_f, rate=self.rate,
                 gamma=None if math.isinf(self.gamma) else self.gamma)
        return d


# ---------------------------------------------------------------- semigroup

def semigroup_constants(A, margin=0.02, T_check=None, n_check=4000, max_sweep=400):
    """``(C_A, lambda_A)`` with ``||e^{At}|| <= C_A e^{-lambda_A t}`` on a check grid.

    Candidate rates ``s (1 - margin)^j``, ``j = 0, 1, ...`` (``s`` the
    negated spectral abscissa) are tried in decreasing order; the first one
    whose envelope ``||Phi(t)|| e^{lambda t}`` is no larger on the second half
    of ``[0, T_check]`` than on the first half is accepted, and ``C_A`` is
    the envelope maximum (at least 1).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DomainError(f"A must be square, got {A.shape}")
    s = -float(np.linalg.eigvals(A).real.max())
    if not s > 0:
        raise DomainError(f"A is not Hurwitz (spectral abscissa {-s:.4g} >= 0)")
    if T_check is None:
        T_check = max(20.0 / s, 4.0 / (margin * s))
    t = np.linspace(0.0, T_check, n_check + 1)
    step = matrix_semigroup(A, t[1])
    norms = np.empty(t.size)
    P = np.eye(A.shape[0])
    for k in range(t.size):
        if k:
            P = P @ step
        norms[k] = np.linalg.norm(P, 2)
    if norms[-1] >= 1.0:
        raise DomainError(f"||exp(A T_check)|| = {norms[-1]:.3g} is not below 1; increase T_check")
    half = t.size // 2
    for j in range(max_sweep):
        lam = s * (1.0 - margin) ** j
        env = norms * np.exp(lam * t)
        if env[half:].max() <= env[:half].max() * (1.0 + 1e-12):
            return max(1.0, float(env.max()) * (1.0 + 1e-12)), lam
    raise DomainError("no admissible decay rate found in the sweep")


def semigroup_envelope_holds(A, C_A, lambda_A, T_check=50.0, n=2000):
    """True if ``||e^{At}|| <= C_A e^{-lambda_A t}`` on a uniform grid of ``[0, T_check]``."""
    t = np.linspace(0.0, T_check, n + 1)
    norms = np.array([np.linalg.norm(matrix_semigroup(A, s), 2) for s in t])
    return bool(np.all(norms <= C_A * np.exp(-lambda_A * t) * (1 + 1e-10)))


# ---------------------------------------------------------------- Gamma(p)

def _jackknife_root(V, p):
    K = V.size
    est = float(V.mean() ** (1.0 / p))
    if K < 2:
        return est, math.inf
    loo = ((V.sum() - V) / (K - 1)) ** (1.0 / p)
    se = math.sqrt((K - 1) / K * float(((loo - loo.mean()) ** 2).sum()))
    return est, se


def sample_seeds(seed, count):
    """Independent 64-bit child seeds derived from ``seed``."""
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(int(count), dtype=np.uint64)]


def gamma_estimate(hurst, p=2.5, sample_count=200, seed=0, lift_level=4, dim=1, steps=128, scale=1.0,
                   sampler=None):
    """Monte Carlo ``Gamma(p) = (E |||x|||^p_{p-var,[-1,1]})^{1/p}`` with a jackknife standard error.

    Each sample is an independent fBm lift on ``[-1, 1]`` with ``steps``
    grid steps; the norm is the grid supremum, so the estimate refers to
    that resolution.  ``sampler(i)`` may supply the i-th rough path instead
    (used for deterministic test processes).
    """
    if int(sample_count) < 2:
        raise DomainError("gamma_estimate needs at least 2 samples")
    grid = TimeGrid.uniform(-1.0, 1.0, steps)
    seeds = sample_seeds(seed, sample_count)
    V = np.empty(int(sample_count))
    for i in range(int(sample_count)):
        if sampler is not None:
            rp = sampler(i)
        else:
            rp = sample_fbm_rough(FbmSpec(hurst, dim, seeds[i], grid, lift_level, p, scale))
        V[i] = rough_pvar_norm(rp, p) ** p
    return _jackknife_root(V, p)


def gamma_time_average(hurst, p=2.5, windows=200, seed=0, lift_level=4, dim=1, steps_per_unit=64):
    """Ergodic estimate: average of ``|||x|||^p`` over ``[k-1, k+1]`` windows of one long path."""
    n = int(windows) + 1
    grid = TimeGrid.uniform(0.0, float(n), n * steps_per_unit)
    rp = sample_fbm_rough(FbmSpec(hurst, dim, seed, grid, lift_level, p))
    V = np.array([rough_pvar_norm(rp, p, (k, k + 2)) ** p for k in range(n - 1)])
    return float(V.mean() ** (1.0 / p))


# ---------------------------------------------------------------- bound weights

def kappa(xnorm, length, params):
    """``2 C_p C_A [1 + ||A|| (b - a)] max(C_g^2 |||x|||^2, C_g |||x|||)``."""
    cx = params.C_g * xnorm
    return 2.0 * params.C_p * params.C_A * (1.0 + params.A_norm * length) * max(cx * cx, cx)


def window_stats(rp, interval, params):
    """``(N, |||x|||)`` on a window: greedy count at ``gamma = 1/(4 C_p C_g)`` and rough norm."""
    part = greedy_times(rp, params.gamma, params.p, interval)
    return part.count, part.total_norm


def lambda_capital(prob, rp, interval, y0_pair, p=2.5):
    """``Lambda(x, [a, b])`` for the initial pair ``(y_a, y~_a)``."""
    C_p = sewing_constant(p)
    part = greedy_times(rp, gamma_or_inf(C_p, prob.C_g), p, interval)
    a, b = part.times[0], part.times[-1]
    ya, yb = (float(np.linalg.norm(v)) for v in y0_pair)
    return lambda_value(ya, yb, prob.f0_norm, prob.C_f, C_p, prob.L, part.count, b - a, p)


def gh_from_stats(N, xnorm, length, prob, params):
    """``(G, H)`` from a window's greedy count and rough norm."""
    k = kappa(xnorm, length, params)
    p = params.p
    growth = math.exp(params.lambda_A + 4.0 * params.L * length) * k * math.exp(params.alpha * N)
    G = growth * N ** ((p - 1.0) / p)
    H = problem_m0(prob, params.C_p) * growth * (N ** ((2.0 * p - 1.0) / p) + 1.0)
    return G, H


def gh_weights(prob, rp, interval, params):
    """``G(x, [a, b])`` and ``H(x, [a, b])``."""
    N, xnorm = window_stats(rp, interval, params)
    return gh_from_stats(N, xnorm, float(interval[1]) - float(interval[0]), prob, params)


# ---------------------------------------------------------------- criteria

CRITERIA = ("theorem", "general", "linear")


def criterion_rhs(params, kind="general"):
    if params.Gamma is None:
        raise ConfigError("criterion needs a Gamma(p) estimate")
    if kind not in CRITERIA:
        raise DomainError(f"unknown criterion kind {kind!r}; expected one of {CRITERIA}")
    u = 4.0 * params.C_p * params.C_g * params.Gamma
    bracket = u ** params.p + u
    pref = 0.5 * params.C_A if kind == "theorem" else params.C_A * (1.0 + params.A_norm)
    return pref * math.exp(params.lambda_A + 4.0 * params.L) * bracket


def criterion_check(params, kind="general"):
    """``(satisfied, margin)`` with ``margin = lambda_A - C_A C_f - RHS``.

    ``kind``: ``"theorem"`` uses the prefactor ``C_A / 2``, ``"general"`` and
    ``"linear"`` use ``C_A (1 + ||A||)``.
    """
    margin = params.lambda_A - params.C_A * params.C_f - criterion_rhs(params, kind)
    return margin > 0, margin


def all_margins(params):
    return {k: criterion_check(params, k)[1] for k in CRITERIA}


def g_hat(params):
    """``C_A e^{lambda_A + 4L} {(4 C_p C_g Gamma)^p + 4 C_p C_g Gamma}``: the growth exponent."""
    u = 4.0 * params.C_p * params.C_g * params.Gamma
    return params.C_A * math.exp(params.lambda_A + 4.0 * params.L) * (u ** params.p + u)


# ---------------------------------------------------------------- Gronwall

def _up(x):
    return math.nextafter(x, math.inf)


def discrete_gronwall(a, u0, alphas, betas, rigorous=True):
    """Right side of the discrete Gronwall bound for ``n = 1..N``.

    ``max(a, u0) prod_{k<n} (1 + alpha_k) + sum_{k<n} beta_k prod_{k<j<n} (1 + alpha_j)``,
    evaluated by the equivalent recursion ``w_n = (1 + alpha_{n-1}) w_{n-1} + beta_{n-1}``.
    With ``rigorous`` every floating-point operation is rounded upward so
    the result dominates the exact real value.
    """
    al = np.asarray(alphas, dtype=float).ravel()
    be = np.asarray(betas, dtype=float).ravel()
    if al.shape != be.shape:
        raise DomainError("alphas and betas must have equal length")
    vals = [float(a), float(u0)] + al.tolist() + be.tolist()
    if not all(v >= 0 and math.isfinite(v) for v in vals):
        raise DomainError("discrete_gronwall needs finite nonnegative inputs")
    w = max(float(a), float(u0))
    out = np.empty(al.size)
    for k in range(al.size):
        if rigorous:
            w = _up(_up(_up(1.0 + al[k]) * w) + be[k])
        else:
            w = (1.0 + al[k]) * w + be[k]
        out[k] = w
    return out


# ---------------------------------------------------------------- absorbing radius

@dataclass
class AbsorbingRadius:
    b: float
    b_hat: float
    horizon: int
    eps_mode: str
    eps_values: list
    terms: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _b_series(prob, rp, params, K, eps):
    lam = params.rate
    total, prod, terms = 0.0, 1.0, []
    for k in range(1, K + 1):
        G, H = gh_weights(prob, rp, (-k - eps, -k + 1 - eps), params)
        term = math.exp(-lam * k) * H * prod
        terms.append(term)
        total += term
        prod *= 1.0 + G
    return total, terms


def absorbing_radius(prob, rp, params, horizon, eps_sweep=False):
    """Truncated ``b(x)`` over ``k = 1..horizon`` and ``b_hat = 1 + M_0 e^{4L} b``.

    The supremum over ``eps`` in ``[0, 1]`` is replaced by ``eps = 0`` or,
    with ``eps_sweep``, the maximum over ``eps`` in ``{0, 1/4, 1/2, 3/4, 1}``
    (window edges snapped to the grid).
    """
    K = int(horizon)
    eps_values = [0.0, 0.25, 0.5, 0.75, 1.0] if eps_sweep else [0.0]
    need = -K - max(eps_values)
    if not (rp.grid.start <= need + 1e-12 and rp.grid.end >= -1e-12):
        raise DomainError(f"absorbing radius over {K} windows needs noise on [{need:g}, 0]")
    if eps_sweep:
        eps_values = [e for e in eps_values if all(rp.grid.contains(-k - e) for k in range(1, K + 1))]
    best, best_terms = -math.inf, []
    for e in eps_values:
        b, terms = _b_series(prob, rp, params, K, e)
        if b > best:
            best, best_terms = b, terms
    b_hat = 1.0 + problem_m0(prob, params.C_p) * math.exp(4.0 * params.L) * best
    return AbsorbingRadius(best, b_hat, K, "sweep" if eps_sweep else "eps=0", eps_values, best_terms)


# ---------------------------------------------------------------- experiments

def sphere_points(d, count, radius, seed):
    """``count`` points on the sphere of ``radius`` in antipodal pairs (``count`` even)."""
    if count < 2 or count % 2:
        raise DomainError("ensemble size must be an even number >= 2")
    if d == 1:
        base = np.ones((count // 2, 1))
    else:
        v = make_rng(seed).standard_normal((count // 2, d))
        base = v / np.linalg.norm(v, axis=1, keepdims=True)
    return radius * np.concatenate([base, -base])


def _diameter(pts):
    if np.isnan(pts).any():
        return math.nan
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())


def _fit(x, y):
    """Least-squares slope and R^2 of ``y`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y)
    if ok.sum() < 2:
        return math.nan, math.nan
    x, y = x[ok], y[ok]
    slope, icpt = np.polyfit(x, y, 1)
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - ((y - (icpt + slope * x)) ** 2).sum() / ss if ss > 0 else 1.0
    return float(slope), float(r2)


@dataclass
class AttractorReport:
    horizons: list
    diameters: list
    diverged: list
    log_norm_rate: list
    rate: float
    rate_r2: float
    ball_radius: float
    ensemble: int
    terminal_max_norm: float
    terminal_mean: list
    singleton: bool
    singleton_tol: float
    seed: int | None = None
    margins: dict | None = None
    g_hat: float | None = None
    rate_bound: float | None = None
    absorbing: dict | None = None
    config_hash: str | None = None

    def to_dict(self):
        return asdict(self)

    def table(self):
        """Rows ``(horizon, diameter, diverged, log rough norm / t)`` for CSV output."""
        return [(h, d, n, r) for h, d, n, r in zip(self.horizons, self.diameters, self.diverged, self.log_norm_rate)]


def _noise(noise):
    if isinstance(noise, RoughPath):
        return noise
    if isinstance(noise, FbmSpec):
        return sample_fbm_rough(noise)
    raise TypeError("noise must be a RoughPath or an FbmSpec")


def pullback_experiment(prob, noise, horizons, ball_radius, ensemble=2, seed=0, params=None,
                        absorbing_horizon=None, scheme="exponential", singleton_rtol=SINGLETON_RTOL):
    """Evolve a sphere of initial points from ``-t`` to ``0`` for each horizon ``t``.

    ``noise`` is a rough path (or an :class:`FbmSpec`) whose grid covers
    ``[-max(horizons), 0]``.  All horizons use the same realization.
    Diverging members are recorded as NaN, not raised.
    """
    rp = _noise(noise)
    hs = sorted(float(h) for h in horizons)
    if not (rp.grid.contains(-hs[-1]) and rp.grid.contains(0.0)):
        raise DomainError(f"noise must cover [-{hs[-1]:g}, 0] on its grid")
    Y0 = sphere_points(prob.d, ensemble, ball_radius, seed)
    diam, div, lnr = [], [], []
    last = None
    for h in hs:
        vals, bad = solve_batch(prob, rp, Y0, (-h, 0.0), on_divergence="mask", check_steps=False, scheme=scheme)
        last = vals[-1]
        diam.append(_diameter(last[~bad]) if (~bad).sum() >= 2 else math.nan)
        div.append(int(bad.sum()))
        w = rough_pvar_norm(rp, rp.p, (-h, -h + 1.0)) if rp.grid.contains(-h + 1.0) else math.nan
        lnr.append(math.log1p(w) / h)
    with np.errstate(divide="ignore"):
        slope, r2 = _fit(hs, np.log(np.asarray(diam)))
    tol = singleton_rtol * ball_radius
    finite = last[np.all(np.isfinite(last), axis=1)]
    rep = AttractorReport(
        horizons=hs, diameters=diam, diverged=div, log_norm_rate=lnr, rate=slope, rate_r2=r2,
        ball_radius=float(ball_radius), ensemble=int(ensemble),
        terminal_max_norm=float(np.linalg.norm(finite, axis=1).max()) if finite.size else math.nan,
        terminal_mean=finite.mean(axis=0).tolist() if finite.size else [],
        singleton=bool(diam[-1] <= tol), singleton_tol=tol, seed=seed,
    )
    if params is not None and params.Gamma is not None:
        rep.margins = all_margins(params)
        rep.g_hat = g_hat(params)
        rep.rate_bound = -(params.rate - rep.g_hat)
    if params is not None and absorbing_horizon:
        rep.absorbing = absorbing_radius(prob, rp, params, absorbing_horizon).to_dict()
    return rep


@dataclass
class ForwardReport:
    times: list
    distance: list
    lhs: list
    rhs: list
    log_rate: float
    bound_holds: bool

    def to_dict(self):
        return asdict(self)


def forward_experiment(prob, noise, horizon, y0_a, y0_b, params, scheme="euler"):
    """Two solutions on one realization over ``[0, horizon]`` with the forward decay bound.

    At integer times ``n``: ``lhs_n = ||z_n|| e^{(lambda_A - L_f) n}`` and
    ``rhs_n = C_A ||z_0|| + e^{lambda_A} sum_{k<n} e^{(lambda_A - L_f) k}
    kappa(Delta_k) Lambda(Delta_k) [||z_k|| + |||z, R|||_{Delta_k}]`` with
    ``Delta_k = [k, k+1]``.
    """
    rp = _noise(noise)
    n_units = int(round(horizon))
    if not (rp.grid.contains(0.0) and rp.grid.contains(float(n_units))):
        raise DomainError(f"noise must cover [0, {n_units}] on its grid")
    sa, sb = coupled_solve(prob, rp, y0_a, y0_b, (0.0, float(n_units)), scheme=scheme)
    z = sb.values - sa.values
    zder = sb.derivative - sa.derivative
    zsol = Solution(z, zder, sa.reference)
    grid = sa.grid
    idx = [grid.index(float(k)) for k in range(n_units + 1)]
    znorm = [float(np.linalg.norm(z[i])) for i in idx]
    rate = params.rate
    p = params.p
    lhs = [znorm[n] * math.exp(rate * n) for n in range(n_units + 1)]
    acc = 0.0
    rhs = [params.C_A * znorm[0]]
    for k in range(n_units):
        win = (float(k), float(k + 1))
        N, xnorm = window_stats(sa.reference, win, params)
        ya = float(np.linalg.norm(sa.values[idx[k]]))
        yb = float(np.linalg.norm(sb.values[idx[k]]))
        lam = lambda_value(ya, yb, prob.f0_norm, prob.C_f, params.C_p, prob.L, N, 1.0, p)
        zr = zsol.pvar_norm(p, win)
        acc += math.exp(rate * k) * kappa(xnorm, 1.0, params) * lam * (znorm[k] + zr)
        rhs.append(params.C_A * znorm[0] + math.exp(params.lambda_A) * acc)
    with np.errstate(divide="ignore"):
        slope, _ = _fit(np.arange(1, n_units + 1), np.log(np.asarray(znorm[1:])))
    holds = all(a <= b for a, b in zip(lhs, rhs))
    return ForwardReport(list(range(n_units + 1)), znorm, lhs, rhs, slope, holds)


def deterministic_equilibrium(prob, mu0=None, tol=1e-13, max_iter=100000):
    """Zero of ``A mu + f(mu)`` by the damped iteration ``mu <- mu + eta (A mu + f(mu))``.

    ``eta = 1 / (2 (||A|| + C_f))``: an explicit Euler step of the
    deterministic flow, which converges to its stable equilibrium.
    """
    eta = 0.5 / prob.L
    mu = np.zeros(prob.d) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    for _ in range(max_iter):
        F = prob.A @ mu + prob.f(mu)
        mu = mu + eta * F
        if np.linalg.norm(F) <= tol:
            return mu
    raise DomainError("equilibrium iteration did not converge")


def equilibrium_drift(problem_for, cgs, noise, horizon, ball_radius=1.0, ensemble=2, seed=0, scheme="euler",
                      singleton_rtol=SINGLETON_RTOL):
    """``||a(x) - mu*||`` for each diffusion size in ``cgs``.

    ``problem_for(c)`` builds the problem at size ``c``.  ``a(x)`` is the
    mean of the pullback ensemble from ``-horizon``; rows whose ensemble did
    not contract to ``1e-6 * ball_radius`` are flagged.
    """
    rp = _noise(noise)
    rows = []
    for c in cgs:
        prob = problem_for(c)
        mu = deterministic_equilibrium(prob)
        Y0 = mu + sphere_points(prob.d, ensemble, ball_radius, seed)
        vals, bad = solve_batch(prob, rp, Y0, (-float(horizon), 0.0), on_divergence="mask", check_steps=False,
                                scheme=scheme)
        last = vals[-1][~bad]
        diam = _diameter(last) if len(last) >= 2 else math.nan
        a = last.mean(axis=0) if len(last) else np.full(prob.d, np.nan)
        rows.append({
            "C_g": float(c), "distance": float(np.linalg.norm(a - mu)), "diameter": diam,
            "contracted": bool(diam <= singleton_rtol * ball_radius), "mu_star": mu.tolist(),
            "attractor_point": a.tolist(),
        })
    return rows
