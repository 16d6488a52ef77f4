import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughstab.errors import ConstantAuditWarning, DimensionError, DomainError
from roughstab.gubinelli import (
    ControlledPath,
    SmoothFunction,
    affine_function,
    audit_constants,
    compose,
    compose_remainder_excess,
    constant_function,
    cosine_function,
    cross_integral,
    remainder,
    rough_integral,
    sewing_constant,
    sewing_residual_bound,
    sine_function,
)
from roughstab.rough_core import FbmSpec, TimeGrid, sample_fbm_rough

# (1 - 2^{-1/5})^{-1}, evaluated with 40-digit decimal arithmetic
SEWING_CONSTANT_2_5 = 7.725023958872575626792428754273505159115


def scalar_sine(cp):
    """``sin(x)`` controlled by ``x`` with derivative ``cos(x)``."""
    x = cp.reference.first_level
    return ControlledPath(cp.reference, np.sin(x[:, 0]), np.cos(x))


def test_sewing_constant():
    assert sewing_constant(2.5) == pytest.approx(SEWING_CONSTANT_2_5, rel=1e-15)
    ps = np.linspace(2.05, 2.95, 19)
    vals = [sewing_constant(p) for p in ps]
    assert all(v > 1 for v in vals)
    assert all(a < b for a, b in zip(vals[:-1], vals[1:]))
    for p in (2.0, 3.0, 1.5):
        with pytest.raises(DomainError):
            sewing_constant(p)


# ---------------------------------------------------------------- remainders

def test_remainder_of_reference_vanishes(fbm2):
    cp = ControlledPath.from_rough_path(fbm2)
    t = fbm2.times
    assert np.all(remainder(cp, t[3], t[40]) == 0.0)
    assert cp.remainder_qvar(1.25) == 0.0


def test_remainder_of_constant_vanishes(fbm2):
    cp = ControlledPath(fbm2, np.full((len(fbm2), 3), 2.0), np.zeros((len(fbm2), 3, 2)))
    assert cp.remainder_qvar(1.25) == 0.0
    assert cp.controlled_norm(2.5) == 0.0


def test_remainder_of_scalar_integral_is_half_square(fbm1):
    _, indef = rough_integral(ControlledPath.from_rough_path(fbm1))
    x = fbm1.first_level[:, 0]
    for i, j in [(0, 64), (5, 17), (30, 31)]:
        assert indef.remainder_idx(i, j) == pytest.approx(0.5 * (x[j] - x[i]) ** 2, abs=1e-13)


def test_remainder_time_lookup(fbm2):
    cp = ControlledPath.from_rough_path(fbm2)
    with pytest.raises(DomainError):
        remainder(cp, fbm2.times[4], fbm2.times[2])


def test_controlled_path_shape_checks(fbm2):
    with pytest.raises(DimensionError):
        ControlledPath(fbm2, np.zeros((len(fbm2), 2)), np.zeros((len(fbm2), 2, 3)))
    with pytest.raises(DimensionError):
        ControlledPath(fbm2, np.zeros((3, 2)), np.zeros((3, 2, 2)))
    with pytest.raises(TypeError):
        ControlledPath(None, np.zeros((3, 2)), np.zeros((3, 2, 2)))


# ---------------------------------------------------------------- composition

def test_compose_affine_is_linear(fbm2, rng):
    C = rng.standard_normal((3, 2, 2))
    g = affine_function(C, rng.standard_normal((3, 2)))
    base = ControlledPath.from_rough_path(fbm2)
    out = compose(g, base)
    assert np.allclose(out.derivative, np.broadcast_to(C, out.derivative.shape), atol=1e-15)
    # the remainder of C y + g0 is C R^y, which vanishes for y = x
    i, j = np.triu_indices(len(fbm2), 1)
    assert np.abs(out.remainder_idx(i, j)).max() <= 1e-13


def test_compose_identity_is_unchanged(fbm2):
    g = affine_function(np.eye(2), np.zeros(2))
    base = ControlledPath.from_rough_path(fbm2)
    out = compose(g, base)
    assert np.array_equal(out.values, base.values)
    assert np.array_equal(out.derivative, base.derivative)


def test_compose_sine_remainder_bound(fbm1):
    g = SmoothFunction(lambda y: np.sin(y), lambda y: np.cos(y)[..., None], 1.0, (1,), name="sin")
    base = ControlledPath.from_rough_path(fbm1)
    out = compose(g, base)
    i, j = np.triu_indices(len(fbm1), 1)
    assert compose_remainder_excess(g, base, out, np.stack([i, j], 1)) <= 1e-15


def test_compose_qvar_pattern(fbm1):
    # |||R^{g(y)}|||_q <= C_g |||R^y|||_q + 1/2 C_g^2 |||x|||_p |||y|||_p with y = x, ||y'|| = 1
    g = SmoothFunction(lambda y: 0.7 * np.sin(y), lambda y: 0.7 * np.cos(y)[..., None], 0.7, (1,))
    base = ControlledPath.from_rough_path(fbm1)
    out = compose(g, base)
    xp = base.value_pvar(2.5)
    assert out.remainder_qvar(1.25) <= 0.7 * base.remainder_qvar(1.25) + 0.5 * 0.7 * xp * xp


def test_diagonal_families():
    g = sine_function(0.3, 2, 2, 0.1)
    y = np.array([[0.2, -1.0], [3.0, 0.5]])
    v = g(y)
    assert v.shape == (2, 2, 2)
    assert v[0, 0, 0] == pytest.approx(0.3 * math.sin(0.2) + 0.1)
    assert v[0, 0, 1] == 0.0
    J = g.jacobian(y)
    assert J[1, 1, 1, 1] == pytest.approx(0.3 * math.cos(0.5))
    assert J[1, 0, 0, 1] == 0.0
    assert g.C_g == pytest.approx(0.4)
    c = cosine_function(0.3, 1, 1)
    assert c.at_zero_norm == pytest.approx(0.3)


def test_numerical_jacobians_match(rng):
    y = rng.standard_normal((4, 2))
    for g in (sine_function(0.3, 2, 2, 0.1), cosine_function(0.5, 2, 1),
              affine_function(rng.standard_normal((2, 2, 2)), np.ones((2, 2)))):
        h = 1e-6
        num = np.stack([(g(y + h * e) - g(y - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
        assert np.allclose(g.jacobian(y), num, atol=1e-8)


def test_audit_constants_flags_understatement(rng):
    pts = rng.uniform(-3, 3, (50, 1))
    honest = sine_function(0.5, 1, 1)
    assert audit_constants(honest, pts) <= 1.0
    liar = SmoothFunction(lambda y: 2 * np.sin(y)[..., None], lambda y: 2 * np.cos(y)[..., None, None], 1.0, (1, 1))
    with pytest.warns(ConstantAuditWarning):
        assert audit_constants(liar, pts) > 1.0


def test_unvectorized_callable(rng):
    g = SmoothFunction(lambda v: np.array([[v[0] ** 2]]), lambda v: np.array([[[2 * v[0]]]]), 1.0, (1, 1),
                       vectorized=False)
    y = rng.standard_normal((5, 1))
    assert np.allclose(g(y)[:, 0, 0], y[:, 0] ** 2)
    assert g.jacobian(y).shape == (5, 1, 1, 1)


def test_constant_function_bounds():
    g = constant_function(np.array([[0.3, 0.0], [0.0, 0.4]]), 2)
    assert g.C_g == pytest.approx(0.5)
    assert g.sup_norm == pytest.approx(0.5)
    assert np.all(g.jacobian(np.ones((3, 2))) == 0)


# ---------------------------------------------------------------- integrals

def test_integral_of_constant_is_increment(fbm2):
    n = len(fbm2)
    cp = ControlledPath(fbm2, np.broadcast_to([1.0, -2.0], (n, 2)), np.zeros((n, 2, 2)))
    val, _ = rough_integral(cp)
    dx = fbm2.first_level[-1] - fbm2.first_level[0]
    assert val == pytest.approx(dx[0] - 2 * dx[1], abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 64))
def test_scalar_self_integral_exact_at_any_partition(seed, size):
    rp = sample_fbm_rough(FbmSpec(0.4, 1, 3, TimeGrid.uniform(0, 1, 64), lift_level=2))
    pts = np.sort(np.random.default_rng(seed).choice(np.arange(1, 64), size=min(size, 63) - 1, replace=False))
    part = rp.times[np.r_[0, pts, 64]]
    val, _ = rough_integral(ControlledPath.from_rough_path(rp), partition=part)
    xT = rp.first_level[-1, 0] - rp.first_level[0, 0]
    assert abs(val - 0.5 * xT ** 2) <= 1e-12


def test_integral_additivity(fbm2):
    x = fbm2.first_level
    cp = ControlledPath(fbm2, np.sin(x), np.stack([np.diag(np.cos(r)) for r in x]))
    t = fbm2.times
    ab, _ = rough_integral(cp, (t[0], t[20]))
    bc, _ = rough_integral(cp, (t[20], t[64]))
    ac, _ = rough_integral(cp, (t[0], t[64]))
    assert ab + bc == pytest.approx(ac, abs=1e-13)


def test_empty_integral(fbm2):
    t = fbm2.times
    val, indef = rough_integral(ControlledPath.from_rough_path(fbm2), (t[3], t[3]))
    assert np.all(val == 0) and indef is None


def test_partition_validation(fbm2):
    cp = ControlledPath.from_rough_path(fbm2)
    t = fbm2.times
    with pytest.raises(DomainError):
        rough_integral(cp, partition=[t[0], t[5], t[3], t[64]])
    with pytest.raises(DomainError):
        rough_integral(cp, partition=[t[1], t[64]])


def test_indefinite_integral_is_controlled_by_integrand(fbm1):
    cp = scalar_sine(ControlledPath.from_rough_path(fbm1))
    _, indef = rough_integral(ControlledPath(fbm1, cp.values[:, None], cp.derivative[:, None, :]))
    assert np.array_equal(indef.derivative, cp.values[:, None])


def test_integration_by_parts_affine(fbm1):
    x = fbm1.first_level[:, 0]
    y = ControlledPath(fbm1, 0.3 + 2.0 * x, np.full((len(x), 1), 2.0))
    z = ControlledPath(fbm1, -1.0 + 0.5 * x, np.full((len(x), 1), 0.5))
    lhs = cross_integral(y, z) + cross_integral(z, y)
    rhs = y.values[-1] * z.values[-1] - y.values[0] * z.values[0]
    assert lhs == pytest.approx(rhs, abs=1e-13)


def test_refinement_self_convergence():
    # |I_{2n} - I_n| for int sin(x) dx decays along dyadic refinements
    top = 12
    rp = sample_fbm_rough(FbmSpec(0.4, 1, 17, TimeGrid.uniform(0, 1, 2 ** top), lift_level=2))
    vals = []
    for k in range(5, top + 1):
        sub = rp.subsample(np.arange(0, 2 ** top + 1, 2 ** (top - k)))
        x = sub.first_level
        val, _ = rough_integral(ControlledPath(sub, np.sin(x), np.cos(x)[:, :, None]))
        vals.append(float(val))
    gaps = np.abs(np.diff(vals))
    slope = np.polyfit(np.arange(len(gaps)), np.log2(gaps), 1)[0]
    assert slope < 0


def test_sewing_residual_bound_holds(fbm1):
    x = fbm1.first_level
    cp = ControlledPath(fbm1, np.sin(x), np.cos(x)[:, :, None])
    for i, j in [(0, 64), (10, 30), (40, 48)]:
        lhs, rhs = sewing_residual_bound(cp, 2.5, i, j)
        assert lhs <= rhs


def test_integrand_dimension_mismatch(fbm2):
    cp = ControlledPath(fbm2, np.zeros((len(fbm2), 3)), np.zeros((len(fbm2), 3, 2)))
    with pytest.raises(DimensionError):
        rough_integral(cp)
