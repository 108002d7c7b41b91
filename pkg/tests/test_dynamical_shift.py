import json

import numpy as np
import pytest

from gdelab.dynamical_shift import (SelfEnergyModel, divergence_demo, dynamical_shift_contour,
                                    fixed_point, iterated_shift, leading_shift,
                                    partial_integrals, regulator_pole_shift, scaling_report,
                                    sigma_derivative, sigma_eval)
from gdelab.errors import BranchViolation, NotApplicable, NotRegulated

ALPHA = 1 / 137.036
REG = SelfEnergyModel(alpha=ALPHA, mass=1.0, family="regulated", cutoff=20.0)
BARE = SelfEnergyModel(alpha=ALPHA, mass=1.0, family="asymptotic", cutoff=None)


def s_real(e, lam=20.0):
    """Closed form below threshold, written out by hand."""
    return ALPHA / (4 * np.pi) * e * np.log(1 - e * e) * lam ** 4 / (lam ** 4 + e ** 4)


def s_prime(e, lam=20.0):
    c = ALPHA / (4 * np.pi)
    log = np.log(1 - e * e)
    reg = lam ** 4 / (lam ** 4 + e ** 4)
    dreg = -4 * e ** 3 * lam ** 4 / (lam ** 4 + e ** 4) ** 2
    return c * (log * reg + e * (-2 * e / (1 - e * e)) * reg + e * log * dreg)


def test_model_validation():
    with pytest.raises(ValueError):
        SelfEnergyModel(alpha=-1.0)
    with pytest.raises(ValueError):
        SelfEnergyModel(family="other")
    with pytest.raises(ValueError):
        SelfEnergyModel(family="regulated", cutoff=None)
    assert REG.with_cutoff(40.0).cutoff == 40.0


@pytest.mark.parametrize("e", [0.1, 0.5, -0.7])
def test_sigma_below_threshold(e):
    assert sigma_eval(REG, e) == pytest.approx(s_real(e), rel=1e-13)
    assert sigma_eval(REG, e).imag == 0.0


def test_sigma_above_threshold_has_negative_imaginary_part():
    v = sigma_eval(BARE, 2.0)
    ref = ALPHA / (4 * np.pi) * 2.0 * complex(np.log(3.0), -np.pi)
    assert v == pytest.approx(ref, rel=1e-13)
    # the real-axis value is the limit from above
    assert sigma_eval(BARE, 2.0 + 1e-9j) == pytest.approx(ref, rel=1e-7)


def test_branch_errors():
    with pytest.raises(BranchViolation):
        sigma_eval(REG, 0.5 - 0.1j)
    with pytest.raises(BranchViolation):
        sigma_eval(REG, 11j)
    with pytest.raises(BranchViolation):
        sigma_eval(REG, 1.0)


def test_derivative_matches_analytic():
    assert sigma_derivative(REG, 0.5) == pytest.approx(s_prime(0.5), rel=1e-8)


def test_iterated_and_fixed_point():
    e0 = 0.5
    d0 = leading_shift(REG, e0)
    e1, d2 = iterated_shift(REG, e0)
    assert e1 == pytest.approx(e0 + s_real(e0), rel=1e-14)
    assert d2 == pytest.approx(s_real(e0 + s_real(e0)), rel=1e-12)
    e = fixed_point(REG, e0)
    assert abs(e - e0 - sigma_eval(REG, e)) < 1e-15
    assert abs(e - e1) < abs(d0) ** 2 * 10


def residue_by_circle(e0, pole, lam=20.0, r=1e-3, n=256):
    """(1 / 2 pi i) of the integrand around a small circle, trapezoid rule."""
    th = 2 * np.pi * np.arange(n) / n
    z = pole + r * np.exp(1j * th)
    s = ALPHA / (4 * np.pi) * z * np.log(1 - z * z) * lam ** 4 / (lam ** 4 + z ** 4)
    return np.mean(s / (e0 - z) ** 2 * r * np.exp(1j * th))


def test_pole_sum_matches_numerical_residues():
    e0 = 0.5
    lam = REG.cutoff
    res = sum(residue_by_circle(e0, lam * np.exp(1j * p)) for p in (np.pi / 4, 3 * np.pi / 4))
    ref = -s_real(e0) * res
    assert regulator_pole_shift(REG, e0) == pytest.approx(ref, rel=1e-9)


def test_contour_integral_matches_pole_sum():
    e0 = 0.5
    det = dynamical_shift_contour(REG, e0, details=True)
    ref = regulator_pole_shift(REG, e0)
    assert abs(det.value - ref) <= 1e-6 * abs(ref)
    assert det.doubling_change <= 1e-6
    with pytest.raises(NotRegulated):
        dynamical_shift_contour(BARE, e0)
    with pytest.raises(ValueError):
        dynamical_shift_contour(REG, e0, window=5.0)


def test_shift_grows_with_cutoff():
    vals = [abs(regulator_pole_shift(REG.with_cutoff(c), 0.5)) for c in (10.0, 20.0, 40.0, 80.0)]
    assert np.all(np.diff(vals) > 0)


def test_divergence_demo(tmp_path):
    rec = divergence_demo(BARE, 0.5, windows=[1e2, 1e3, 1e4, 1e5])
    assert rec.increasing and rec.status == "divergent"
    assert rec.log_sq_correlation > 0.99
    rec.to_csv(tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().startswith("R,re_I,im_I")
    with pytest.raises(NotApplicable):
        divergence_demo(REG, 0.5)


def test_regulated_partials_settle():
    a, b = partial_integrals(REG, 0.5, [400.0, 800.0])
    assert abs(a - b) <= 1e-6 * abs(b)


def test_scaling_report_json(tmp_path):
    rep = scaling_report(REG, 0.5)
    assert rep.deltaD == pytest.approx(rep.pole_sum, rel=1e-6)
    assert set(rep.a0_spread) == {10.0, 20.0, 40.0}
    path = tmp_path / "s.json"
    rep.to_json(path)
    doc = json.loads(path.read_text())
    assert doc["schema"] == "gdelab.shift/1"
    assert doc["divergence"] == "converged"


def test_a0_scales_as_inverse_alpha_squared():
    # S is linear in alpha, so dD = d0 * O(alpha) ~ alpha^2 and dD / (alpha^3 d0) ~ alpha^-2
    a1, a2 = 1 / 137.0, 1 / 100.0
    r1 = scaling_report(REG.with_alpha(a1), 0.5, cutoff_factors=(1.0,))
    r2 = scaling_report(REG.with_alpha(a2), 0.5, cutoff_factors=(1.0,))
    assert r1.a0 / r2.a0 == pytest.approx((a2 / a1) ** 2, rel=1e-6)


def test_a0_undefined_when_leading_shift_vanishes():
    rep = scaling_report(REG, 0.0)
    assert rep.a0 is None
    assert rep.to_dict()["a0"] is None


def test_iterated_shift_taylor_remainder():
    # delta2 - delta0 = d0 S'(e0) + d0^2 S''(e0) / 2 + O(d0^3)
    e0 = 0.5
    d0 = s_real(e0)
    _, d2 = iterated_shift(REG, e0)
    h = 1e-4
    spp = (s_prime(e0 + h) - s_prime(e0 - h)) / (2 * h)
    remainder = (d2 - d0) - d0 * s_prime(e0)
    assert remainder.real == pytest.approx(0.5 * spp * d0 ** 2, rel=1e-3)
