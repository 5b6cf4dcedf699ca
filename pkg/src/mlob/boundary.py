"""Free boundary separating the wait and sell regions.

In (impact, position) coordinates (y, theta) the sell region lies right of a
decreasing curve theta -> y(theta) through (y_0, 0), where y_0 solves
h(y) lambda(y) + delta = 0.  Written as theta(y), the curve solves

    theta'(y) = M1'(y) / M2(y)
             = [ (d + 2 h l) h'^2 + (d^2 + 2 d h l + h^2 l^2 + h^2 l') h'
                 - h (d + h l) h'' ] / [ d h' (d + h l + h') ],

with d = delta and l = lambda(y), and blows up logarithmically at y_inf, the
root of h lambda + h' + delta = 0.  The integration variable u = log(y - y_inf)
removes the singularity, so one Runge-Kutta sweep from y_0 down to a floor a
few ulps above y_inf yields the whole curve; the dense solver output is the
primary evaluator and a monotone cubic through the accepted steps supplies
starting guesses for the inverse maps, polished by Newton steps on the exact
relations.

Time to liquidation along the boundary satisfies

    e^{-delta tau} = (f(y) / f(y_0)) (h lambda + h' + delta)(y) / h'(y),

giving the curve's time parametrization (ybar(tau), thetabar(tau)) without
further integration.

The acquisition problem (impatience eta = mu - gamma > 0) has a mirrored,
increasing buy boundary from the root of h lambda = eta with no asymptote;
it is integrated directly in y together with its completion-time integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import (
    BoundaryRangeError,
    BracketError,
    DomainError,
    SingularityError,
    ValidationError,
)
from .market import MarketSpec

__all__ = [
    "CriticalPoints",
    "FreeBoundary",
    "AcquisitionBoundary",
    "critical_points",
    "boundary_ode_rhs",
    "solve_boundary",
    "ttl",
    "boundary_of_ttl",
    "ybar_prime",
    "boundary_rate",
    "lambert_w",
    "acquisition_critical_point",
    "acquisition_ode_rhs",
    "acquisition_boundary",
    "load_boundary_csv",
]

_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class CriticalPoints:
    """Roots y_inf < y_0 < 0 of h lambda + h' + delta and h lambda + delta."""

    y0: float
    y_inf: float


def _bracket_scan(g, lo: float, hi: float, n: int, name: str) -> tuple[float, float]:
    ys = np.linspace(lo, hi, n)
    prev_y, prev_v = ys[0], g(ys[0])
    for y in ys[1:]:
        v = g(y)
        if prev_v == 0.0:
            return (prev_y, y)
        if prev_v * v < 0.0:
            return (prev_y, y)
        prev_y, prev_v = y, v
    raise BracketError(
        f"roots not bracketed: {name} shows no sign change on "
        f"[{lo:.6g}, {hi:.6g}]"
    )


def _refine_root(g, bracket: tuple[float, float]) -> float:
    return float(brentq(g, bracket[0], bracket[1], xtol=1e-14, rtol=4 * _EPS))


def critical_points(
    spec: MarketSpec, search_interval: tuple[float, float] | None = None
) -> CriticalPoints:
    """Locate y_0 and y_inf by bracketed root finding.

    Both defining functions are strictly increasing under the standing
    assumptions, so the roots are unique.  Residuals are verified to
    1e-12 * (1 + |delta|).
    """

    if not (spec.delta > 0.0):
        raise ValidationError(
            f"critical points need delta > 0, got delta={spec.delta}"
        )

    def a1(y):
        return spec.h(y) * spec.lam(y) + spec.delta

    def a2(y):
        return a1(y) + spec.h_prime(y)

    if search_interval is None:
        lo_dom, _ = spec.domain
        if math.isfinite(lo_dom):
            lo = lo_dom + 1e-9 * (1.0 + abs(lo_dom))
        else:
            lo = -1.0
            for _ in range(60):
                if a2(lo) < 0.0:
                    break
                lo *= 2.0
            else:
                raise BracketError(
                    "roots not bracketed: y_inf shows no sign change on the "
                    "scanned interval"
                )
        search_interval = (lo, 0.0)

    lo, hi = search_interval
    y_inf = _refine_root(a2, _bracket_scan(a2, lo, hi, 4096, "y_inf"))
    y0 = _refine_root(a1, _bracket_scan(a1, max(lo, y_inf), hi, 4096, "y0"))

    tol = 1e-12 * (1.0 + abs(spec.delta))
    for name, g, root in (("y0", a1, y0), ("y_inf", a2, y_inf)):
        res = abs(g(root))
        if res > tol:
            raise ValidationError(
                f"critical point {name}={root!r} has residual {res:.3e} > {tol:.3e}"
            )
    if not (y_inf < y0 < 0.0):
        raise ValidationError(
            f"critical points out of order: expected y_inf < y0 < 0, "
            f"got y_inf={y_inf}, y0={y0}"
        )
    return CriticalPoints(y0=y0, y_inf=y_inf)


def boundary_ode_rhs(spec: MarketSpec, y: float) -> float:
    """Slope theta'(y) of the sell boundary, strictly negative on (y_inf, y0].

    Raises SingularityError at or beyond the asymptote, where
    h lambda + h' + delta <= 0.
    """

    d = spec.delta
    h = spec.h(y)
    hp = spec.h_prime(y)
    hpp = spec.h_double_prime(y)
    lam = spec.lam(y)
    lamp = spec.lam_prime(y)
    hl = h * lam
    core = d + hl + hp
    if core <= 0.0:
        raise SingularityError(
            f"boundary ODE singular at y={y!r}: h*lambda + h' + delta = "
            f"{core!r} <= 0 (at or below the asymptote y_inf)"
        )
    num = (d + 2.0 * hl) * hp * hp \
        + (d * d + 2.0 * d * hl + hl * hl + h * h * lamp) * hp \
        - h * (d + hl) * hpp
    return num / (d * hp * core)


def ttl(spec: MarketSpec, cp: CriticalPoints, y: float) -> float:
    """Time to liquidation along the boundary, as a function of the impact y.

    Solves e^{-delta tau} = (f(y)/f(y0)) (h lambda + h' + delta)(y) / h'(y);
    tau(y0) = 0 and tau grows without bound as y drops to y_inf.
    """

    d = spec.delta
    arg = (spec.f(y) / spec.f(cp.y0)) \
        * ((spec.h(y) * spec.lam(y) + spec.h_prime(y) + d) / spec.h_prime(y))
    if arg <= 0.0:
        raise DomainError(
            f"time to liquidation undefined at y={y!r}: at or below the "
            f"asymptote y_inf={cp.y_inf!r}"
        )
    if arg > 1.0 + 1e-9:
        raise DomainError(
            f"time to liquidation undefined at y={y!r} above y0={cp.y0!r}"
        )
    return -math.log(arg) / d


def ybar_prime(spec: MarketSpec, cp: CriticalPoints, y: float) -> float:
    """Derivative ybar'(tau) of the boundary impact path, evaluated at y = ybar(tau).

    ybar'(tau) = delta (hl + h' + d) h'
               / [ (h'' - h' l)(hl + h' + d) - (h' l + h l' + h'') h' ].
    """

    d = spec.delta
    h = spec.h(y)
    hp = spec.h_prime(y)
    hpp = spec.h_double_prime(y)
    lam = spec.lam(y)
    lamp = spec.lam_prime(y)
    core = h * lam + hp + d
    denom = (hpp - hp * lam) * core - (hp * lam + h * lamp + hpp) * hp
    return d * core * hp / denom


def boundary_rate(spec: MarketSpec, cp: CriticalPoints, y: float) -> float:
    """Selling rate thetabar'(tau) = ybar'(tau) - h(y) along the boundary."""

    return ybar_prime(spec, cp, y) - spec.h(y)


class FreeBoundary:
    """Solved sell boundary with forward and inverse parametrizations.

    ``points`` is an (n, 3) array of samples (y, theta, tau) ordered by
    increasing theta (decreasing y).  When built by :func:`solve_boundary`
    the dense Runge-Kutta output is the primary theta(y) evaluator; curves
    loaded from CSV fall back to monotone cubic interpolation of the samples
    (exact at the samples, interpolation accuracy between them).

    ``asymptote_reached`` is set when integration stopped at the resolution
    floor near y_inf instead of reaching ``theta_max``; queries beyond the
    solved range raise BoundaryRangeError either way.  The last one or two
    e-folds above y_inf are inherently noisy in double precision because
    h lambda + h' + delta cancels to roundoff there.
    """

    def __init__(
        self,
        points: np.ndarray,
        theta_max: float,
        asymptote_reached: bool,
        spec: MarketSpec | None = None,
        cp: CriticalPoints | None = None,
        dense=None,
        u0: float | None = None,
        s_end: float | None = None,
    ):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValidationError("boundary points must be an (n>=2, 3) array")
        order = np.argsort(pts[:, 1])
        pts = pts[order]
        if np.any(np.diff(pts[:, 1]) <= 0.0) or np.any(np.diff(pts[:, 0]) >= 0.0):
            raise ValidationError(
                "boundary samples must have strictly increasing theta and "
                "strictly decreasing y"
            )
        self.points = pts
        self.theta_max = float(theta_max)
        self.asymptote_reached = bool(asymptote_reached)
        self.spec = spec
        self.cp = cp
        self._dense = dense
        self._u0 = u0
        self._s_end = s_end
        self.theta_end = float(pts[-1, 1])
        self.y_floor = float(pts[-1, 0])
        self.tau_end = float(pts[-1, 2])
        self.y_top = float(pts[0, 0])
        self._y_of_theta_interp = PchipInterpolator(pts[:, 1], pts[:, 0])
        asc = pts[::-1]
        self._theta_of_y_interp = PchipInterpolator(asc[:, 0], asc[:, 1])
        self._y_of_tau_interp = PchipInterpolator(pts[:, 2], pts[:, 0])
        self._tau_of_y_interp = PchipInterpolator(asc[:, 0], asc[:, 2])

    def _range_error(self, what: str) -> BoundaryRangeError:
        reason = "asymptote reached" if self.asymptote_reached else \
            f"theta_max={self.theta_max:.6g} reached"
        return BoundaryRangeError(
            f"{what} beyond solved boundary range ({reason}: solved for "
            f"theta in [0, {self.theta_end:.6g}], y in [{self.y_floor:.17g}, "
            f"{self.y_top:.17g}]); re-solve with larger theta_max if possible"
        )

    def theta_of_y(self, y: float) -> float:
        """Boundary height theta(y) for y in [y_floor, y0]."""

        y = float(y)
        tol = 1e-12 * (1.0 + abs(self.y_top))
        if y > self.y_top + tol:
            raise DomainError(
                f"theta_of_y: y={y!r} above y0={self.y_top!r}; the boundary "
                f"is defined on (y_inf, y0]"
            )
        if self._dense is not None:
            y_inf = self.cp.y_inf
            if y <= y_inf:
                raise DomainError(
                    f"theta_of_y: y={y!r} at or below the asymptote "
                    f"y_inf={y_inf!r}"
                )
            s = self._u0 - math.log(y - y_inf)
            if s < 0.0:
                s = 0.0
            if s > self._s_end * (1.0 + 1e-12) + 1e-12:
                raise self._range_error(f"theta_of_y(y={y!r})")
            return float(self._dense(min(s, self._s_end))[0])
        if y < self.y_floor - tol:
            raise self._range_error(f"theta_of_y(y={y!r})")
        return float(self._theta_of_y_interp(min(max(y, self.y_floor), self.y_top)))

    def y_of_theta(self, theta: float) -> float:
        """Inverse map y(theta); monotone cubic guess plus Newton polish."""

        theta = float(theta)
        if theta < 0.0:
            raise DomainError(f"y_of_theta: theta={theta!r} must be nonnegative")
        if theta > self.theta_end * (1.0 + 1e-12) + 1e-12:
            raise self._range_error(f"y_of_theta(theta={theta!r})")
        theta_c = min(theta, self.theta_end)
        if theta_c == 0.0:
            return self.y_top
        y = float(self._y_of_theta_interp(theta_c))
        y = min(max(y, self.y_floor), self.y_top)
        if self._dense is None or self.spec is None:
            return y
        tol = 1e-13 * (1.0 + theta_c)
        for _ in range(4):
            diff = self.theta_of_y(y) - theta_c
            if abs(diff) <= tol:
                return y
            y_new = y - diff / boundary_ode_rhs(self.spec, y)
            y = min(max(y_new, self.y_floor), self.y_top)
        if abs(self.theta_of_y(y) - theta_c) <= 1e-10 * (1.0 + theta_c):
            return y
        idx = int(np.searchsorted(self.points[:, 1], theta_c))
        lo = self.points[min(idx, len(self.points) - 1), 0]
        hi = self.points[max(idx - 1, 0), 0]
        return float(brentq(
            lambda v: self.theta_of_y(v) - theta_c, lo, hi,
            xtol=1e-14, rtol=4 * _EPS,
        ))

    def tau_of_y(self, y: float) -> float:
        """Time to liquidation from boundary point (y, theta(y))."""

        if self.spec is not None and self.cp is not None:
            return ttl(self.spec, self.cp, y)
        tol = 1e-12 * (1.0 + abs(self.y_top))
        if not (self.y_floor - tol <= y <= self.y_top + tol):
            raise self._range_error(f"tau_of_y(y={y!r})")
        return float(self._tau_of_y_interp(min(max(y, self.y_floor), self.y_top)))

    def y_of_tau(self, tau: float) -> float:
        """Impact ybar(tau) on the boundary at time-to-liquidation tau."""

        tau = float(tau)
        if tau < 0.0:
            raise DomainError(f"y_of_tau: tau={tau!r} must be nonnegative")
        if tau == 0.0:
            return self.y_top
        if self.spec is None or self.cp is None:
            if tau > self.tau_end * (1.0 + 1e-12):
                raise self._range_error(f"y_of_tau(tau={tau!r})")
            return float(self._y_of_tau_interp(min(tau, self.tau_end)))
        y_inf = self.cp.y_inf
        if tau <= self.tau_end:
            idx = int(np.searchsorted(self.points[:, 2], tau))
            lo = self.points[min(idx, len(self.points) - 1), 0]
            hi = self.points[max(idx - 1, 0), 0]
        else:
            hi = self.y_floor
            lo = None
            for mult in (8.0, 64.0, 512.0, 4096.0):
                cand = y_inf + mult * _EPS * max(1.0, abs(y_inf))
                try:
                    if ttl(self.spec, self.cp, cand) >= tau:
                        lo = cand
                        break
                except DomainError:
                    continue
            if lo is None:
                raise BoundaryRangeError(
                    f"y_of_tau: tau={tau!r} beyond the resolvable range near "
                    f"the asymptote y_inf={y_inf!r}"
                )
        g = lambda v: ttl(self.spec, self.cp, v) - tau
        if g(lo) == 0.0:
            return float(lo)
        if g(hi) == 0.0:
            return float(hi)
        return float(brentq(g, lo, hi, xtol=1e-12, rtol=4 * _EPS))

    def theta_bar_of_tau(self, tau: float) -> float:
        """Boundary position thetabar(tau) = theta(ybar(tau))."""

        return self.theta_of_y(self.y_of_tau(tau))

    def to_csv(self, path) -> None:
        """Write samples as ``y,theta,tau`` rows with 17 significant digits."""

        with open(path, "w", encoding="utf-8") as fh:
            fh.write("y,theta,tau\n")
            for y, theta, tau in self.points:
                fh.write(f"{y:.17g},{theta:.17g},{tau:.17g}\n")


def solve_boundary(
    spec: MarketSpec,
    cp: CriticalPoints,
    theta_max: float = 1000.0,
    rtol: float = 1e-10,
) -> FreeBoundary:
    """Integrate the boundary ODE from (y0, 0) toward the asymptote.

    Integrates d theta / d s = -theta'(y) (y - y_inf) in s = log(y0 - y_inf)
    - log(y - y_inf), which stays finite at the asymptote, stopping at
    theta = theta_max or at the double-precision floor above y_inf
    (``asymptote_reached`` flags the latter).
    """

    if not (theta_max > 0.0):
        raise ValidationError(f"theta_max must be positive, got {theta_max}")
    y0, y_inf = cp.y0, cp.y_inf
    u0 = math.log(y0 - y_inf)
    floor = max(4.0 * _EPS * max(1.0, abs(y_inf)), 1e-250)
    s_max = u0 - math.log(floor)

    def rhs(s, _theta):
        y = y_inf + math.exp(u0 - s)
        return -boundary_ode_rhs(spec, y) * (y - y_inf)

    def hit_theta_max(s, theta):
        return theta[0] - theta_max

    hit_theta_max.terminal = True
    hit_theta_max.direction = 1.0

    sol = solve_ivp(
        rhs, (0.0, s_max), [0.0],
        method="RK45", rtol=rtol, atol=1e-14,
        dense_output=True, events=hit_theta_max, max_step=0.25,
    )
    if not sol.success:
        raise ValidationError(f"boundary integration failed: {sol.message}")

    if sol.status == 1 and len(sol.t_events[0]):
        s_end = float(sol.t_events[0][0])
        asymptote = False
    else:
        s_end = float(sol.t[-1])
        asymptote = True

    s_samples = np.unique(np.append(sol.t[sol.t <= s_end], s_end))
    ys = y_inf + np.exp(u0 - s_samples)
    thetas = sol.sol(s_samples)[0]
    thetas[0] = 0.0
    taus = []
    for y in ys:
        try:
            taus.append(ttl(spec, cp, y))
        except DomainError:
            # cancellation in h*lambda + h' + delta at the very floor
            break
    n_ok = len(taus)
    points = np.column_stack([ys[:n_ok], thetas[:n_ok], np.asarray(taus)])

    return FreeBoundary(
        points=points,
        theta_max=theta_max,
        asymptote_reached=asymptote,
        spec=spec,
        cp=cp,
        dense=sol.sol,
        u0=u0,
        s_end=s_end,
    )


def boundary_of_ttl(fb: FreeBoundary, tau: float) -> tuple[float, float]:
    """Boundary point (y, theta) with time to liquidation tau."""

    y = fb.y_of_tau(tau)
    return (y, fb.theta_of_y(y))


def lambert_w(x: float) -> float:
    """Principal branch of the product logarithm on x >= 0.

    Solves w e^w = x by Halley iteration from a logarithmic initial guess;
    the result satisfies |w e^w - x| <= 1e-14 * max(1, x).
    """

    x = float(x)
    if not (x >= 0.0):
        raise DomainError(f"lambert_w requires x >= 0, got {x!r}")
    if x == 0.0:
        return 0.0
    w = math.log1p(x)
    if w == 0.0:
        return x
    for _ in range(100):
        ew = math.exp(w)
        resid = w * ew - x
        denom = ew * (w + 1.0) - (w + 2.0) * resid / (2.0 * w + 2.0)
        step = resid / denom
        w -= step
        if abs(step) <= 1e-16 * (1.0 + abs(w)):
            break
    if abs(w * math.exp(w) - x) > 1e-14 * max(1.0, x):
        raise ValidationError(f"lambert_w failed to converge at x={x!r}")
    return w


def acquisition_critical_point(spec: MarketSpec, eta: float) -> float:
    """Root y > 0 of h(y) lambda(y) = eta, the buy boundary's foot."""

    if not (eta > 0.0):
        raise ValidationError(f"acquisition requires eta = mu - gamma > 0, got {eta}")

    def g(y):
        return spec.h(y) * spec.lam(y) - eta

    hi = 1.0
    _, dom_hi = spec.domain
    for _ in range(200):
        if math.isfinite(dom_hi) and hi >= dom_hi:
            hi = dom_hi - 1e-12 * (1.0 + abs(dom_hi))
            if g(hi) <= 0.0:
                raise BracketError(
                    "roots not bracketed: h*lambda - eta shows no sign change "
                    "below the domain's upper end"
                )
            break
        if g(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise BracketError(
            "roots not bracketed: h*lambda - eta shows no sign change on (0, inf)"
        )
    lo = hi * 1e-12
    root = _refine_root(g, (lo, hi))
    if abs(g(root)) > 1e-12 * (1.0 + abs(eta)):
        raise ValidationError(f"acquisition critical point residual too large at {root!r}")
    return root


def acquisition_ode_rhs(spec: MarketSpec, eta: float, y: float) -> float:
    """Slope of the buy boundary in remaining-position height, positive for y >= y0_acq."""

    h = spec.h(y)
    hp = spec.h_prime(y)
    hpp = spec.h_double_prime(y)
    lam = spec.lam(y)
    lamp = spec.lam_prime(y)
    core = h * lam + hp - eta
    if core <= 0.0:
        raise SingularityError(
            f"acquisition boundary ODE singular at y={y!r}: "
            f"h*lambda + h' - eta = {core!r} <= 0"
        )
    return -1.0 + h * lam / eta - h * hpp / (eta * hp) \
        + h * (hp * lam + h * lamp + hpp) / (eta * core)


class AcquisitionBoundary:
    """Increasing buy boundary theta_acq(y) on [y0_acq, inf).

    theta_acq(y) is the remaining quantity to purchase when the impact state
    sits on the boundary at y; the curve starts at (y0_acq, 0) and the
    purchase completes there.  ``points`` columns are (y, theta, tau) with
    tau the time to complete from y,

        tau(y) = int_{y0_acq}^{y} (1 + theta'(u)) / h(u) du,

    which is finite for every solved y.
    """

    def __init__(self, points, theta_max, spec=None, eta=None, dense=None,
                 y_end=None, complete=True):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValidationError("boundary points must be an (n>=2, 3) array")
        order = np.argsort(pts[:, 0])
        pts = pts[order]
        if np.any(np.diff(pts[:, 1]) <= 0.0):
            raise ValidationError("acquisition boundary must be strictly increasing")
        self.points = pts
        self.theta_max = float(theta_max)
        self.spec = spec
        self.eta = eta
        self._dense = dense
        self.y_start = float(pts[0, 0])
        self.y_end = float(pts[-1, 0]) if y_end is None else float(y_end)
        self.theta_end = float(pts[-1, 1])
        self.tau_end = float(pts[-1, 2])
        self._y_of_theta_interp = PchipInterpolator(pts[:, 1], pts[:, 0])
        self._theta_of_y_interp = PchipInterpolator(pts[:, 0], pts[:, 1])
        self._y_of_tau_interp = PchipInterpolator(pts[:, 2], pts[:, 0])

    def _range_error(self, what: str) -> BoundaryRangeError:
        return BoundaryRangeError(
            f"{what} beyond solved acquisition boundary (theta in "
            f"[0, {self.theta_end:.6g}], y in [{self.y_start:.6g}, "
            f"{self.y_end:.6g}]); re-solve with larger theta_max"
        )

    def _eval_dense(self, y: float) -> tuple[float, float]:
        out = self._dense(y)
        return float(out[0]), float(out[1])

    def theta_of_y(self, y: float) -> float:
        y = float(y)
        tol = 1e-12 * (1.0 + abs(self.y_start))
        if y < self.y_start - tol:
            raise DomainError(
                f"theta_of_y: y={y!r} below the boundary foot y0_acq="
                f"{self.y_start!r}"
            )
        y = max(y, self.y_start)
        if y > self.y_end * (1.0 + 1e-12) + 1e-12:
            raise self._range_error(f"theta_of_y(y={y!r})")
        y = min(y, self.y_end)
        if self._dense is not None:
            return self._eval_dense(y)[0]
        return float(self._theta_of_y_interp(y))

    def tau_of_y(self, y: float) -> float:
        """Time to complete the purchase from boundary point y."""

        y = float(y)
        if y < self.y_start - 1e-12 * (1.0 + abs(self.y_start)):
            raise DomainError(
                f"tau_of_y: y={y!r} below the boundary foot {self.y_start!r}"
            )
        y = max(y, self.y_start)
        if y > self.y_end * (1.0 + 1e-12) + 1e-12:
            raise self._range_error(f"tau_of_y(y={y!r})")
        y = min(y, self.y_end)
        if self._dense is not None:
            return self._eval_dense(y)[1]
        return float(PchipInterpolator(self.points[:, 0], self.points[:, 2])(y))

    def y_of_theta(self, theta: float) -> float:
        theta = float(theta)
        if theta < 0.0:
            raise DomainError(f"y_of_theta: theta={theta!r} must be nonnegative")
        if theta == 0.0:
            return self.y_start
        if theta > self.theta_end * (1.0 + 1e-12) + 1e-12:
            raise self._range_error(f"y_of_theta(theta={theta!r})")
        theta_c = min(theta, self.theta_end)
        y = float(self._y_of_theta_interp(theta_c))
        y = min(max(y, self.y_start), self.y_end)
        if self._dense is None or self.spec is None:
            return y
        tol = 1e-13 * (1.0 + theta_c)
        for _ in range(4):
            diff = self.theta_of_y(y) - theta_c
            if abs(diff) <= tol:
                return y
            y_new = y - diff / acquisition_ode_rhs(self.spec, self.eta, y)
            y = min(max(y_new, self.y_start), self.y_end)
        if abs(self.theta_of_y(y) - theta_c) <= 1e-10 * (1.0 + theta_c):
            return y
        return float(brentq(
            lambda v: self.theta_of_y(v) - theta_c, self.y_start, self.y_end,
            xtol=1e-14, rtol=4 * _EPS,
        ))

    def y_of_tau(self, tau: float) -> float:
        tau = float(tau)
        if tau < 0.0:
            raise DomainError(f"y_of_tau: tau={tau!r} must be nonnegative")
        if tau == 0.0:
            return self.y_start
        if tau > self.tau_end * (1.0 + 1e-12):
            raise self._range_error(f"y_of_tau(tau={tau!r})")
        tau_c = min(tau, self.tau_end)
        y = float(self._y_of_tau_interp(tau_c))
        y = min(max(y, self.y_start), self.y_end)
        if self._dense is None:
            return y
        g = lambda v: self.tau_of_y(v) - tau_c
        diff = g(y)
        if abs(diff) <= 1e-13 * (1.0 + tau_c):
            return y
        return float(brentq(g, self.y_start, self.y_end, xtol=1e-14, rtol=4 * _EPS))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("y,theta,tau\n")
            for y, theta, tau in self.points:
                fh.write(f"{y:.17g},{theta:.17g},{tau:.17g}\n")


def acquisition_boundary(
    spec: MarketSpec,
    eta: float,
    theta_max: float = 1000.0,
    rtol: float = 1e-10,
) -> AcquisitionBoundary:
    """Solve the buy boundary and its completion-time parametrization.

    Integrates theta' and tau' = (1 + theta') / h jointly in y from the foot
    y0_acq upward until theta reaches theta_max.  There is no asymptote: the
    slope stays finite, so the curve always reaches theta_max (or the
    domain's upper end, which raises).
    """

    if not (theta_max > 0.0):
        raise ValidationError(f"theta_max must be positive, got {theta_max}")
    y_start = acquisition_critical_point(spec, eta)

    def rhs(y, state):
        tp = acquisition_ode_rhs(spec, eta, y)
        return [tp, (1.0 + tp) / spec.h(y)]

    def hit_theta_max(y, state):
        return state[0] - theta_max

    hit_theta_max.terminal = True
    hit_theta_max.direction = 1.0

    _, dom_hi = spec.domain
    y_hi = y_start + 1.0
    for _ in range(200):
        if math.isfinite(dom_hi):
            y_hi = dom_hi - 1e-9 * (1.0 + abs(dom_hi))
            break
        sol = solve_ivp(
            rhs, (y_start, y_hi), [0.0, 0.0],
            method="RK45", rtol=rtol, atol=1e-14,
            dense_output=True, events=hit_theta_max,
            max_step=(y_hi - y_start) / 32.0,
        )
        if sol.status == 1 and len(sol.t_events[0]):
            break
        y_hi = y_start + (y_hi - y_start) * 2.0
    sol = solve_ivp(
        rhs, (y_start, y_hi), [0.0, 0.0],
        method="RK45", rtol=rtol, atol=1e-14,
        dense_output=True, events=hit_theta_max,
        max_step=(y_hi - y_start) / 32.0,
    )
    if not sol.success:
        raise ValidationError(f"acquisition boundary integration failed: {sol.message}")
    if sol.status == 1 and len(sol.t_events[0]):
        y_end = float(sol.t_events[0][0])
    else:
        y_end = float(sol.t[-1])
        if math.isfinite(dom_hi):
            raise BoundaryRangeError(
                f"acquisition boundary reached the domain's upper end "
                f"{dom_hi:.6g} before theta_max={theta_max:.6g}"
            )

    y_samples = np.unique(np.append(sol.t[sol.t <= y_end], y_end))
    states = sol.sol(y_samples)
    thetas = states[0]
    taus = states[1]
    thetas[0] = 0.0
    taus[0] = 0.0
    points = np.column_stack([y_samples, thetas, taus])

    return AcquisitionBoundary(
        points=points,
        theta_max=theta_max,
        spec=spec,
        eta=eta,
        dense=sol.sol,
        y_end=y_end,
    )


def load_boundary_csv(path, spec: MarketSpec | None = None,
                      cp: CriticalPoints | None = None):
    """Load a boundary curve exported by ``to_csv``.

    Orientation is inferred from the samples: y decreasing with theta is the
    sell boundary, y increasing the buy boundary.  Supplying spec (and cp for
    the sell side) restores analytic time parametrization where available;
    otherwise all maps interpolate the samples.
    """

    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
    if data.shape[1] != 3:
        raise ValidationError(f"{path}: expected 3 columns y,theta,tau")
    order = np.argsort(data[:, 1])
    data = data[order]
    dy = np.diff(data[:, 0])
    if np.all(dy < 0.0):
        return FreeBoundary(
            points=data,
            theta_max=float(data[-1, 1]),
            asymptote_reached=False,
            spec=spec,
            cp=cp,
        )
    if np.all(dy > 0.0):
        return AcquisitionBoundary(points=data, theta_max=float(data[-1, 1]),
                                   spec=spec)
    raise ValidationError(f"{path}: samples are not monotone in y")
