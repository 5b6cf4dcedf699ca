"""Explicit value function of the liquidation problem and its verification.

States are (y, theta): impact level and remaining position.  With the solved
sell boundary theta -> y(theta) the plane splits into a wait region
W = {y < y(theta)}, a band S1 = {y(theta) < y < y0 + theta} where an initial
block lands on the boundary, and S2 = {y >= y0 + theta} where the whole
position is sold at once.  Writing V for the value per unit of unaffected
price, the construction is

    V_bdry(theta) = [ f h (delta + h lambda) / (delta h') ](y(theta)),
    V(y, theta)   = V_bdry(theta) exp(int_{y(theta)}^{y} -delta/h)    in W,
    V(y, theta)   = V_bdry(theta - D) + F(y) - F(y - D)               in S,

where D solves theta - D = theta(y - D): the signed distance to the boundary
along the 45-degree transfer line of a block trade.  The same sell formula
with D < 0 extends V to the two-sided problem, where the ex-wait region
becomes a buy region.

The variational inequalities certified here are

    -delta V - h V_y  = 0 in the closure of W,  < 0 in S,
    V_y + V_theta - f = 0 in the closure of S,  > 0 in W,
    V(y, 0) = 0,

and, for the two-sided extension, V_y + V_theta = f everywhere with
-delta V - h V_y <= 0, equal exactly on the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .boundary import CriticalPoints, FreeBoundary, boundary_ode_rhs
from .errors import BoundaryRangeError, DomainError
from .market import MarketSpec

__all__ = [
    "RegionLabel",
    "EvalPoint",
    "ValueField",
    "VIReport",
    "check_variational_inequalities",
    "check_appendix_identity",
    "v_bdry_integral",
    "pasting_m1",
    "pasting_m2",
    "dump_value_grid",
]

_EPS = float(np.finfo(float).eps)


class RegionLabel(str, Enum):
    WAIT = "wait"
    SELL1 = "sell1"
    SELL2 = "sell2"
    BOUNDARY = "boundary"
    BUY = "buy"


@dataclass(frozen=True)
class EvalPoint:
    """Value and analytic partials at one state."""

    y: float
    theta: float
    region: RegionLabel
    delta: float
    V: float
    V_y: float
    V_theta: float


class ValueField:
    """Evaluator for V and its partials over a solved boundary.

    Holds the market spec, critical points and FreeBoundary together and
    caches the per-theta boundary lookups that grid sweeps hammer.  All
    queries raise DomainError outside the order-book support and
    BoundaryRangeError when they would need the boundary beyond its solved
    range.
    """

    def __init__(self, spec: MarketSpec, cp: CriticalPoints, fb: FreeBoundary):
        self.spec = spec
        self.cp = cp
        self.fb = fb
        self._w_cache: dict[float, tuple[float, float]] = {}
        self._y_of_xi_interp = None
        self._xi_table = None
        self._y_table = None

    # -- geometry ---------------------------------------------------------

    def delta_distance(self, y: float, theta: float) -> float:
        """Signed block size D with theta - D = theta(y - D).

        Positive in the sell region (the optimal initial block), negative in
        the wait/buy region (the block that would land on the boundary from
        the left).  D = theta exactly when y - theta >= y0, the sell-all
        case.  Root residual is at most 1e-12 * (1 + |y - theta|).
        """

        y = float(y)
        theta = float(theta)
        if theta < 0.0:
            raise DomainError(f"delta_distance: theta={theta!r} must be nonnegative")
        fb = self.fb
        y0 = self.cp.y0
        xi = y - theta
        if xi >= y0:
            return theta
        zeta_floor = fb.y_floor - fb.theta_end
        if xi < zeta_floor:
            raise BoundaryRangeError(
                f"state (y={y!r}, theta={theta!r}) maps to the boundary beyond "
                f"its solved range (needs y - theta >= {zeta_floor:.6g}); "
                f"re-solve with larger theta_max"
            )
        if self._y_of_xi_interp is None:
            pts = fb.points
            xi_vals = (pts[:, 0] - pts[:, 1])[::-1]
            y_vals = pts[::-1, 0]
            self._y_of_xi_interp = PchipInterpolator(xi_vals, y_vals)
            self._xi_table = xi_vals
            self._y_table = y_vals
        yb = float(self._y_of_xi_interp(min(max(xi, self._xi_table[0]), self._xi_table[-1])))
        yb = min(max(yb, fb.y_floor), y0)
        tol = 1e-13 * (1.0 + abs(xi))
        converged = False
        for _ in range(6):
            diff = (yb - fb.theta_of_y(yb)) - xi
            if abs(diff) <= tol:
                converged = True
                break
            slope = 1.0 - boundary_ode_rhs(self.spec, yb) if self.spec else 2.0
            yb = min(max(yb - diff / slope, fb.y_floor), y0)
        if not converged and abs((yb - fb.theta_of_y(yb)) - xi) > 1e-12 * (1.0 + abs(xi)):
            i = int(np.searchsorted(self._xi_table, xi))
            lo = self._y_table[max(i - 1, 0)]
            hi = self._y_table[min(i, len(self._y_table) - 1)]
            if lo > hi:
                lo, hi = hi, lo
            yb = float(brentq(
                lambda v: (v - fb.theta_of_y(v)) - xi, lo, hi,
                xtol=1e-14, rtol=4 * _EPS,
            ))
        return y - yb

    def classify(self, y: float, theta: float, two_sided: bool = False,
                 boundary_tol: float = 1e-9) -> RegionLabel:
        """Region label of a state; left-of-boundary is WAIT or BUY by mode."""

        return self._eval(y, theta, two_sided=two_sided,
                          boundary_tol=boundary_tol).region

    # -- value ------------------------------------------------------------

    def _decay(self, y_from: float, y_to: float) -> float:
        """exp(int_{y_from}^{y_to} -delta/h), the waiting discount factor."""

        d = self.spec.delta
        if self.spec.beta is not None:
            return (y_to / y_from) ** (-d / self.spec.beta)
        val, _ = quad(lambda x: -d / self.spec.h(x), y_from, y_to,
                      epsabs=1e-12, epsrel=1e-11, limit=200)
        return math.exp(val)

    def _v_bdry_at(self, y_b: float) -> float:
        spec = self.spec
        h = spec.h(y_b)
        return spec.f(y_b) * h * (spec.delta + h * spec.lam(y_b)) \
            / (spec.delta * spec.h_prime(y_b))

    def v_bdry(self, theta: float) -> float:
        """Boundary value V(y(theta), theta)."""

        if theta == 0.0:
            return 0.0
        return self._v_bdry_at(self.fb.y_of_theta(theta))

    def _wait_anchor(self, theta: float) -> tuple[float, float]:
        hit = self._w_cache.get(theta)
        if hit is None:
            y_bw = self.fb.y_of_theta(theta)
            hit = (y_bw, self._v_bdry_at(y_bw) if theta > 0.0 else 0.0)
            if len(self._w_cache) > 200_000:
                self._w_cache.clear()
            self._w_cache[theta] = hit
        return hit

    def _eval(self, y: float, theta: float, two_sided: bool = False,
              boundary_tol: float = 1e-9) -> EvalPoint:
        spec = self.spec
        y = float(y)
        theta = float(theta)
        spec.require_in_domain(y)
        if theta < 0.0:
            raise DomainError(f"theta={theta!r} must be nonnegative")
        y0 = self.cp.y0

        if theta == 0.0 and y < y0 and not two_sided:
            D = self._decay(y0, y)
            return EvalPoint(
                y=y, theta=theta, region=RegionLabel.WAIT, delta=y - y0,
                V=0.0, V_y=0.0, V_theta=spec.f(y0) * D,
            )

        xi = y - theta
        if xi >= y0:
            spec.require_in_domain(xi)
            v_y = spec.f(y) - spec.f(xi)
            if theta == 0.0 and abs(y - y0) <= boundary_tol:
                region = RegionLabel.BOUNDARY
            else:
                region = RegionLabel.SELL2
            return EvalPoint(
                y=y, theta=theta, region=region, delta=theta,
                V=spec.F(y) - spec.F(xi), V_y=v_y, V_theta=spec.f(xi),
            )

        delta = self.delta_distance(y, theta)
        if delta > boundary_tol or abs(delta) <= boundary_tol or two_sided:
            y_b = y - delta
            theta_b = theta - delta
            vb = self._v_bdry_at(y_b) if theta_b > 0.0 else 0.0
            v_y = spec.f(y) - spec.f(y_b) - spec.delta / spec.h(y_b) * vb
            if abs(delta) <= boundary_tol:
                region = RegionLabel.BOUNDARY
            elif delta > 0.0:
                region = RegionLabel.SELL1
            else:
                region = RegionLabel.BUY
            return EvalPoint(
                y=y, theta=theta, region=region, delta=delta,
                V=vb + spec.F(y) - spec.F(y_b), V_y=v_y,
                V_theta=spec.f(y) - v_y,
            )

        y_bw, vbw = self._wait_anchor(theta)
        D = self._decay(y_bw, y)
        V = vbw * D
        return EvalPoint(
            y=y, theta=theta, region=RegionLabel.WAIT, delta=delta,
            V=V,
            V_y=-spec.delta / spec.h(y) * V,
            V_theta=spec.f(y_bw) * D + spec.delta / spec.h(y_bw) * V,
        )

    def v(self, y: float, theta: float) -> float:
        """Value per unit of unaffected price, monotone (sell-only) problem."""

        return self._eval(y, theta).V

    def v_partials(self, y: float, theta: float) -> EvalPoint:
        """Value with analytic partials V_y, V_theta (monotone problem)."""

        return self._eval(y, theta)

    def v_two_sided(self, y: float, theta: float) -> float:
        """Value of the two-sided problem; positive left of the boundary too."""

        return self._eval(y, theta, two_sided=True).V

    def v_two_sided_partials(self, y: float, theta: float) -> EvalPoint:
        return self._eval(y, theta, two_sided=True)

    def cash_value(self, s0: float, y: float, theta: float,
                   two_sided: bool = False) -> float:
        """Monetary value s0 * V at unaffected price s0."""

        return float(s0) * self._eval(y, theta, two_sided=two_sided).V


@dataclass(frozen=True)
class VIReport:
    """Summary of a variational-inequality sweep over a grid.

    Both strict expressions have quadratic contact at the free boundary
    (second-order smooth fit), so a fixed margin is unattainable arbitrarily
    close to the curve.  The sweep therefore uses three zones by distance
    |delta|: equalities to ``eq_tol`` within ``boundary_tol``; correct sign
    up to a roundoff allowance out to ``strict_zone``; full ``strict_margin``
    clearance beyond it.  ``min_wait_margin`` and ``max_sell_margin`` are
    taken over the strict zone only.
    """

    two_sided: bool
    n_points: int
    region_counts: dict[str, int]
    max_smooth_eq: float
    max_gradient_eq: float
    max_theta0_value: float
    min_wait_margin: float
    max_sell_margin: float
    eq_tol: float
    strict_margin: float
    boundary_tol: float
    strict_zone: float
    failures: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures


def check_variational_inequalities(
    field: ValueField,
    grid: tuple[np.ndarray, np.ndarray],
    two_sided: bool = False,
    eq_tol: float = 1e-8,
    strict_margin: float = 1e-10,
    boundary_tol: float = 1e-9,
    strict_zone: float = 1e-3,
    sign_tol: float = 1e-12,
    max_failures: int = 20,
) -> VIReport:
    """Sweep a grid and check the variational inequalities pointwise.

    ``grid`` is a pair (y values, theta values); the full product is tested.
    Equalities must hold to ``eq_tol`` everywhere they are asserted.  Strict
    inequalities must have the correct sign (within a ``sign_tol`` roundoff
    allowance) at every point farther than ``boundary_tol`` from the
    boundary, and must additionally clear ``strict_margin`` at points
    farther than ``strict_zone``; see :class:`VIReport` on why the two
    thresholds differ.  theta = 0 rows assert V = 0 (for the two-sided
    problem only right of y0, where no profitable round trip exists).
    """

    spec = field.spec
    d = spec.delta
    ys, thetas = (np.asarray(g, dtype=float) for g in grid)
    counts: dict[str, int] = {}
    failures: list[str] = []
    max_smooth_eq = 0.0
    max_gradient_eq = 0.0
    max_theta0 = 0.0
    min_wait_margin = math.inf
    max_sell_margin = -math.inf

    def fail(msg: str) -> None:
        if len(failures) < max_failures:
            failures.append(msg)

    def check_strict(expr: float, want_positive: bool, dist: float,
                     what: str, y: float, theta: float) -> float:
        signed = expr if want_positive else -expr
        if signed < -sign_tol:
            fail(f"{what} = {expr:.3e} has wrong sign at ({y:.6g}, {theta:.6g})")
        elif dist > strict_zone and signed <= strict_margin:
            fail(f"{what} = {expr:.3e} misses margin {strict_margin:.1e} at "
                 f"({y:.6g}, {theta:.6g}), {dist:.2e} from the boundary")
        return signed

    n = 0
    for theta in thetas:
        for y in ys:
            n += 1
            ev = field._eval(y, theta, two_sided=two_sided,
                             boundary_tol=boundary_tol)
            counts[ev.region.value] = counts.get(ev.region.value, 0) + 1
            e1 = -d * ev.V - spec.h(y) * ev.V_y
            e2 = ev.V_y + ev.V_theta - spec.f(y)

            if theta == 0.0 and (not two_sided or y >= field.cp.y0):
                max_theta0 = max(max_theta0, abs(ev.V))
                if abs(ev.V) > eq_tol:
                    fail(f"V({y:.6g}, 0) = {ev.V:.3e} nonzero")
                continue

            dist = abs(ev.delta)
            on_boundary = dist <= boundary_tol
            if two_sided:
                max_gradient_eq = max(max_gradient_eq, abs(e2))
                if abs(e2) > eq_tol:
                    fail(f"two-sided V_y+V_theta-f = {e2:.3e} at ({y:.6g}, {theta:.6g})")
                if on_boundary:
                    max_smooth_eq = max(max_smooth_eq, abs(e1))
                    if abs(e1) > eq_tol:
                        fail(f"two-sided boundary -dV-hV_y = {e1:.3e} at "
                             f"({y:.6g}, {theta:.6g})")
                else:
                    m = check_strict(e1, False, dist, "two-sided -dV-hV_y", y, theta)
                    if dist > strict_zone:
                        max_sell_margin = max(max_sell_margin, -m)
                continue

            if on_boundary:
                max_smooth_eq = max(max_smooth_eq, abs(e1))
                max_gradient_eq = max(max_gradient_eq, abs(e2))
                if abs(e1) > eq_tol or abs(e2) > eq_tol:
                    fail(f"boundary equalities ({e1:.3e}, {e2:.3e}) at "
                         f"({y:.6g}, {theta:.6g})")
            elif ev.region is RegionLabel.WAIT:
                max_smooth_eq = max(max_smooth_eq, abs(e1))
                if abs(e1) > eq_tol:
                    fail(f"wait -dV-hV_y = {e1:.3e} at ({y:.6g}, {theta:.6g})")
                m = check_strict(e2, True, dist, "wait V_y+V_theta-f", y, theta)
                if dist > strict_zone:
                    min_wait_margin = min(min_wait_margin, m)
            else:
                max_gradient_eq = max(max_gradient_eq, abs(e2))
                if abs(e2) > eq_tol:
                    fail(f"sell V_y+V_theta-f = {e2:.3e} at ({y:.6g}, {theta:.6g})")
                m = check_strict(e1, False, dist, "sell -dV-hV_y", y, theta)
                if dist > strict_zone:
                    max_sell_margin = max(max_sell_margin, -m)

    return VIReport(
        two_sided=two_sided,
        n_points=n,
        region_counts=counts,
        max_smooth_eq=max_smooth_eq,
        max_gradient_eq=max_gradient_eq,
        max_theta0_value=max_theta0,
        min_wait_margin=min_wait_margin,
        max_sell_margin=max_sell_margin,
        eq_tol=eq_tol,
        strict_margin=strict_margin,
        boundary_tol=boundary_tol,
        strict_zone=strict_zone,
        failures=tuple(failures),
    )


def check_appendix_identity(field: ValueField, theta: float) -> float:
    """Absolute error in the boundary flux identity

    int_0^theta (h'/(h lambda + h' + delta))(y(x)) dx
        = [ h (h lambda + delta) / (delta (h lambda + h' + delta)) ](y(theta)).
    """

    spec = field.spec
    d = spec.delta

    def integrand(x):
        yb = field.fb.y_of_theta(x)
        return spec.h_prime(yb) / (spec.h(yb) * spec.lam(yb) + spec.h_prime(yb) + d)

    lhs, _ = quad(integrand, 0.0, theta, epsabs=1e-12, epsrel=1e-11, limit=200)
    yt = field.fb.y_of_theta(theta)
    h = spec.h(yt)
    hl = h * spec.lam(yt)
    rhs = h * (hl + d) / (d * (hl + spec.h_prime(yt) + d))
    return abs(lhs - rhs)


def v_bdry_integral(field: ValueField, theta: float) -> float:
    """Boundary value by its double-integral representation

    V_bdry(theta) = int_0^theta f(y(x))
                      exp(int_x^theta delta/h(y(z)) dz)
                      exp(int_{y(theta)}^{y(x)} delta/h(w) dw) dx,

    a slow independent oracle for :meth:`ValueField.v_bdry`.
    """

    spec = field.spec
    fb = field.fb
    d = spec.delta
    y_theta = fb.y_of_theta(theta)

    def inner_z(x):
        val, _ = quad(lambda z: d / spec.h(fb.y_of_theta(z)), x, theta,
                      epsabs=1e-12, epsrel=1e-10, limit=200)
        return val

    def outer(x):
        yx = fb.y_of_theta(x)
        if spec.beta is not None:
            along_y = (d / spec.beta) * math.log(yx / y_theta)
        else:
            along_y, _ = quad(lambda w: d / spec.h(w), y_theta, yx,
                              epsabs=1e-12, epsrel=1e-10, limit=200)
        return spec.f(yx) * math.exp(inner_z(x) + along_y)

    val, _ = quad(outer, 0.0, theta, epsabs=1e-12, epsrel=1e-9, limit=200)
    return val


def _inv_phi(spec: MarketSpec, y: float, ref: float) -> float:
    """1/phi(y) = exp(int_ref^y delta/h), the smooth-pasting scale factor."""

    d = spec.delta
    if spec.beta is not None:
        return (y / ref) ** (d / spec.beta)
    val, _ = quad(lambda x: d / spec.h(x), ref, y, epsabs=1e-12, epsrel=1e-11,
                  limit=200)
    return math.exp(val)


def pasting_m1(spec: MarketSpec, y: float, ref: float) -> float:
    """Smooth-pasting candidate C(theta(y)) = [f h (d + h lambda)/(d h')](y) / phi(y)."""

    h = spec.h(y)
    return spec.f(y) * _inv_phi(spec, y, ref) * h * (spec.delta + h * spec.lam(y)) \
        / (spec.delta * spec.h_prime(y))


def pasting_m2(spec: MarketSpec, y: float, ref: float) -> float:
    """Smooth-pasting slope C'(theta(y)) = [f (d + h lambda + h')/h'](y) / phi(y)."""

    h = spec.h(y)
    return spec.f(y) * _inv_phi(spec, y, ref) \
        * (spec.delta + h * spec.lam(y) + spec.h_prime(y)) / spec.h_prime(y)


def dump_value_grid(field: ValueField, ys, thetas, path,
                    two_sided: bool = False) -> None:
    """Write ``y,theta,region,V,V_y,V_theta`` rows over the grid product."""

    ys = np.asarray(ys, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("y,theta,region,V,V_y,V_theta\n")
        for theta in thetas:
            for y in ys:
                ev = field._eval(y, theta, two_sided=two_sided)
                fh.write(
                    f"{y:.17g},{theta:.17g},{ev.region.value},"
                    f"{ev.V:.17g},{ev.V_y:.17g},{ev.V_theta:.17g}\n"
                )
