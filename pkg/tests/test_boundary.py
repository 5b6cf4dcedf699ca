"""Free boundary: critical points, ODE solution, TTL maps, acquisition."""

import math

import numpy as np
import pytest
from scipy.special import lambertw

import oracles
from mlob import (BoundaryRangeError, DomainError, acquisition_boundary,
                  acquisition_critical_point, boundary_of_ttl,
                  boundary_ode_rhs, boundary_rate, lambert_w,
                  load_boundary_csv, ttl, ybar_prime)


def test_critical_points_presets(r1, r05):
    assert r1.cp.y0 == pytest.approx(-0.5, abs=1e-12)
    assert r1.cp.y_inf == pytest.approx(-1.5, abs=1e-12)
    assert r05.cp.y0 == pytest.approx(oracles.y0_closed(1.0, 0.5, 1.0, 0.1),
                                      abs=1e-12)
    assert r05.cp.y_inf == pytest.approx(
        oracles.y_inf_closed(1.0, 0.5, 1.0, 0.1), abs=1e-12)


def test_ode_rhs_at_foot(r1):
    # both closed-form routes give theta'(y0) = -1 for the r=1 preset
    assert boundary_ode_rhs(r1.spec, r1.cp.y0) == pytest.approx(-1.0,
                                                               abs=1e-12)


def test_boundary_matches_closed_form(r1, r05):
    for preset in (r1, r05):
        # stay inside the solved range; theta_max=12 stops short of y_inf
        # for the r=0.5 preset
        lo = preset.fb.points[-1, 0] + 1e-9
        ys = np.linspace(lo, preset.cp.y0, 60)
        for y in ys:
            want = oracles.theta_closed(y, preset.c, preset.r, preset.beta,
                                        preset.delta)
            assert preset.fb.theta_of_y(float(y)) == pytest.approx(
                want, rel=1e-8, abs=1e-10)


def test_boundary_monotone_and_foot(r1):
    pts = r1.fb.points
    assert pts[0, 0] == pytest.approx(r1.cp.y0, abs=1e-14)
    assert pts[0, 1] == 0.0
    assert pts[0, 2] == 0.0
    assert np.all(np.diff(pts[:, 0]) < 0.0)   # y strictly decreasing
    assert np.all(np.diff(pts[:, 1]) > 0.0)   # theta strictly increasing
    assert np.all(np.diff(pts[:, 2]) > 0.0)   # tau strictly increasing
    assert r1.fb.theta_end >= 12.0 - 1e-9


def test_inverse_maps_roundtrip(r1):
    for theta in np.linspace(0.01, 11.5, 40):
        y = r1.fb.y_of_theta(float(theta))
        assert r1.fb.theta_of_y(y) == pytest.approx(theta, rel=1e-9,
                                                    abs=1e-11)
    for tau in np.linspace(0.0, r1.fb.points[-1, 2] * 0.98, 40):
        y = r1.fb.y_of_tau(float(tau))
        assert r1.fb.tau_of_y(y) == pytest.approx(tau, abs=1e-9)


def test_ttl_closed_forms(r1, r05):
    for preset in (r1, r05):
        ys = np.linspace(preset.cp.y_inf + 0.05, preset.cp.y0, 50)
        for y in ys:
            want = oracles.ttl_closed(y, preset.c, preset.r, preset.beta,
                                      preset.delta)
            assert ttl(preset.spec, preset.cp, float(y)) == pytest.approx(
                want, rel=1e-12, abs=1e-12)
        assert ttl(preset.spec, preset.cp, preset.cp.y0) == pytest.approx(
            0.0, abs=1e-12)


def test_lambert_parametrization(r1):
    W = lambda x: float(lambertw(x).real)
    for tau in np.linspace(0.0, 6.0, 30):
        want = oracles.ybar_lambert(float(tau), 1.0, 1.0, 0.5, W)
        assert r1.fb.y_of_tau(float(tau)) == pytest.approx(want, abs=1e-9)
        y, theta = boundary_of_ttl(r1.fb, float(tau))
        assert y == pytest.approx(want, abs=1e-9)
        assert theta == pytest.approx(r1.fb.theta_of_y(want), abs=1e-8)


def test_lambert_w_function():
    assert lambert_w(0.0) == 0.0
    assert lambert_w(1.0) == pytest.approx(oracles.LAMBERT_W_1, abs=1e-15)
    for x in (1e-8, 0.1, 0.5, math.e, 10.0, 1e4):
        w = lambert_w(x)
        assert w * math.exp(w) == pytest.approx(x, rel=1e-13)
        assert w == pytest.approx(float(lambertw(x).real), rel=1e-13)


def test_curve_speed_and_rate(r1):
    # dy/dtau from the closed form against a finite difference of y(tau)
    for tau in (0.2, 1.0, 3.0):
        h = 1e-6
        fd = (r1.fb.y_of_tau(tau + h) - r1.fb.y_of_tau(tau - h)) / (2.0 * h)
        y = r1.fb.y_of_tau(tau)
        assert ybar_prime(r1.spec, r1.cp, y) == pytest.approx(fd, rel=1e-5)
    assert boundary_rate(r1.spec, r1.cp, r1.cp.y0) == pytest.approx(
        oracles.rate_at_foot(1.0, 1.0, 1.0, 0.5), rel=1e-12)


def test_range_errors(r1):
    # above the foot the curve does not exist at all; below the solved
    # floor it exists but was not computed, hence the distinct class
    with pytest.raises(DomainError):
        r1.fb.theta_of_y(r1.cp.y0 + 0.1)
    with pytest.raises(DomainError):
        r1.fb.y_of_tau(-0.5)
    with pytest.raises(BoundaryRangeError):
        r1.fb.y_of_theta(r1.fb.theta_end + 1.0)
    with pytest.raises(BoundaryRangeError):
        r1.fb.theta_of_y(r1.cp.y_inf + 1e-4)


def test_csv_roundtrip(tmp_path, r1):
    path = tmp_path / "curve.csv"
    r1.fb.to_csv(path)
    first = path.read_text().splitlines()
    assert first[0] == "y,theta,tau"
    assert float(first[1].split(",")[1]) == 0.0
    # the reload interpolates the sampled rows, so parity is looser than
    # the solver's own accuracy
    loaded = load_boundary_csv(path, spec=r1.spec, cp=r1.cp)
    for theta in (0.3, 1.0, 5.0):
        assert loaded.y_of_theta(theta) == pytest.approx(
            r1.fb.y_of_theta(theta), abs=1e-5)


def test_acquisition_boundary(r1):
    eta = 0.5
    assert acquisition_critical_point(r1.spec, eta) == pytest.approx(
        oracles.ACQ_FOOT, abs=1e-12)
    ab = acquisition_boundary(r1.spec, eta, theta_max=6.0)
    assert ab.points[0, 0] == pytest.approx(oracles.ACQ_FOOT, abs=1e-10)
    assert ab.points[0, 1] == 0.0
    # buy curve rises from the foot; completion time grows with the target
    assert np.all(np.diff(ab.points[:, 0]) > 0.0)
    assert np.all(np.diff(ab.points[:, 1]) > 0.0)
    assert np.all(np.diff(ab.points[:, 2]) > 0.0)
    for theta in (0.5, 2.0, 5.0):
        y = ab.y_of_theta(theta)
        assert ab.theta_of_y(y) == pytest.approx(theta, rel=1e-9, abs=1e-10)
    for tau in (0.1, 1.0, 3.0):
        assert ab.tau_of_y(ab.y_of_tau(tau)) == pytest.approx(tau, abs=1e-9)
    assert ab.tau_of_y(ab.points[0, 0]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(BoundaryRangeError):
        ab.y_of_theta(7.0)


def test_acquisition_foot_bracketing(r05):
    # h lambda is bounded by beta r/(1-r) for r < 1, so a larger eta has no root
    from mlob import BracketError, ValidationError
    with pytest.raises(BracketError):
        acquisition_critical_point(r05.spec, 10.0)
    with pytest.raises(ValidationError):
        acquisition_critical_point(r05.spec, 0.0)
