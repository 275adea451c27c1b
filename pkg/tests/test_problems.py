"""Hypothesis validation and the exponential coefficient shift."""

import numpy as np
import pytest

from gbdsde import (
    CoefficientSet,
    SamplingPlan,
    TimeGrid,
    choose_shift_rate,
    exponential_shift,
    validate_hypotheses,
)


def _zero_matrix(d):
    def g(t, x, y, z):
        return np.zeros(y.shape + (d,))

    return g


def make_coeffs(f=None, g=None, h=None, **kw):
    defaults = dict(n=1, d=1, K=1.0, c=1.0, alpha=0.25, beta1=1.0)
    defaults.update(kw)
    return CoefficientSet(
        f=f or (lambda t, x, y, z: np.zeros_like(y)),
        g=g or _zero_matrix(defaults["d"]),
        h=h or (lambda t, x, y: np.zeros_like(y)),
        **defaults,
    )


def test_linear_g_saturates_alpha():
    alpha = 0.25
    coeffs = make_coeffs(g=lambda t, x, y, z: np.sqrt(alpha) * z, alpha=alpha)
    report = validate_hypotheses(coeffs, SamplingPlan(count=2000))
    assert report.passed
    check = report["H2_g_z_ratio"]
    assert check.worst_ratio == pytest.approx(alpha, abs=1e-12)


def test_violating_g_fails_with_witness():
    coeffs = make_coeffs(g=lambda t, x, y, z: 2.0 * z, alpha=0.25)
    report = validate_hypotheses(coeffs, SamplingPlan(count=2000))
    check = report["H2_g_z_ratio"]
    assert not check.passed
    assert check.worst_ratio == pytest.approx(4.0, abs=1e-9)
    assert check.witness is not None and "ratio" in check.witness


def test_zero_coefficients_pass_with_zero_ratios():
    report = validate_hypotheses(make_coeffs(), SamplingPlan(count=1000))
    assert report.passed
    assert report["H2_f_lipschitz"].worst_ratio == 0.0
    assert report["H2_h_lipschitz"].worst_ratio == 0.0


def test_valid_set_never_exceeds_declared_constants():
    # 1e4 samples in the default box; deterministic coefficients
    coeffs = make_coeffs(
        f=lambda t, x, y, z: 0.5 * y + 0.5 * z.sum(axis=-1),
        g=lambda t, x, y, z: 0.3 * y[..., None] + 0.4 * z,
        h=lambda t, x, y: 0.9 * y,
        c=1.0, alpha=0.25, beta1=0.9, K=2.0,
    )
    report = validate_hypotheses(coeffs, SamplingPlan(count=10_000))
    for check in report.checks:
        if np.isfinite(check.bound):
            assert check.worst_ratio <= check.bound + 1e-12, check.name


def test_nonfinite_coefficient_is_hard_failure():
    def bad_f(t, x, y, z):
        out = np.zeros_like(y)
        out[0] = np.nan
        return out

    report = validate_hypotheses(make_coeffs(f=bad_f), SamplingPlan(count=100))
    assert not report.passed
    failed = [c for c in report.checks if not c.passed]
    assert any(c.witness is not None for c in failed)


def test_integrability_checked_for_each_mu():
    report = validate_hypotheses(make_coeffs(), SamplingPlan(count=100))
    names = [c.name for c in report.checks]
    for mu in (1.0, 5.0, 10.0):
        assert f"H1_integrability_mu_{mu:g}" in names


def test_spatial_hypotheses_checked_when_x_present():
    coeffs = make_coeffs(
        b=lambda x: 0.5 * x,
        sigma=lambda x: np.ones(x.shape[:-1] + (1, 1)),
        l=lambda x: x[..., 0],
        x_dim=1,
        K=2.0,
    )
    report = validate_hypotheses(coeffs, SamplingPlan(count=1000))
    assert report["H3_b_lipschitz"].passed
    assert report["H4_l_growth"].passed


def test_choose_shift_rate():
    assert choose_shift_rate(0.5) == pytest.approx(1.5)
    assert choose_shift_rate(0.0) == pytest.approx(1.0)
    assert choose_shift_rate(3.0) == pytest.approx(4.0)


def test_shift_with_flat_k_is_value_identity():
    grid = TimeGrid(0.0, 1.0, 10)
    coeffs = make_coeffs(h=lambda t, x, y: 0.5 * y, beta1=0.5)
    shifted, transform = exponential_shift(coeffs, 1.5, np.zeros(11), grid)
    assert shifted.beta2 == pytest.approx(-1.0)
    y = np.random.default_rng(0).normal(size=(4, 11, 1))
    z = np.random.default_rng(1).normal(size=(4, 11, 1, 1))
    yf, zf = transform.forward(y, z, np.zeros(11))
    assert np.array_equal(yf, y) and np.array_equal(zf, z)
    # h_bar(y) = (0.5 - 1.5) y on flat k
    ys = np.random.default_rng(2).normal(size=(6, 1))
    got = shifted.h(grid.points[3], None, ys)
    assert np.allclose(got, -1.0 * ys)


def test_shifted_h_is_one_sided_negative():
    # beta1 = 3, rate 4: sampled inner product <dy, dh> <= -|dy|^2
    grid = TimeGrid(0.0, 1.0, 20)
    k_path = 0.3 * grid.points
    coeffs = make_coeffs(h=lambda t, x, y: 3.0 * np.tanh(y), beta1=3.0)
    rate = choose_shift_rate(coeffs.beta1)
    shifted, _ = exponential_shift(coeffs, rate, k_path, grid)
    rng = np.random.default_rng(5)
    t = grid.points[7]
    y1 = rng.normal(size=(500, 1))
    y2 = rng.normal(size=(500, 1))
    dh = shifted.h(t, None, y1) - shifted.h(t, None, y2)
    inner = ((y1 - y2) * dh).sum(axis=-1)
    assert np.all(inner <= -((y1 - y2) ** 2).sum(axis=-1) + 1e-12)


def test_transform_roundtrip_machine_precision():
    grid = TimeGrid(0.0, 1.0, 50)
    k = np.maximum.accumulate(np.abs(np.random.default_rng(3).normal(size=(8, 51))), axis=1)
    k[:, 0] = 0.0
    _, transform = exponential_shift(make_coeffs(), 2.0, k, grid)
    y = np.random.default_rng(4).normal(size=(8, 51, 1))
    z = np.random.default_rng(5).normal(size=(8, 51, 1, 1))
    yf, zf = transform.forward(y, z, k)
    yb, zb = transform.inverse(yf, zf, k)
    assert np.allclose(yb, y, rtol=0, atol=1e-13)
    assert np.allclose(zb, z, rtol=0, atol=1e-13)


def test_shift_rejects_bad_inputs():
    grid = TimeGrid(0.0, 1.0, 5)
    with pytest.raises(ValueError):
        exponential_shift(make_coeffs(), 0.0, np.zeros(6), grid)
    with pytest.raises(ValueError):
        exponential_shift(make_coeffs(), 1.0, np.array([0, 1, 0.5, 2, 3, 4.0]), grid)
    with pytest.raises(ValueError):
        exponential_shift(make_coeffs(), 1.0, np.ones(6), grid)


def test_coefficient_set_validates_constants():
    with pytest.raises(ValueError):
        make_coeffs(alpha=1.5)
    with pytest.raises(ValueError):
        make_coeffs(K=-1.0)
