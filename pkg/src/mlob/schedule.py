"""Optimal trade schedules built from a solved free boundary.

The liquidation schedule follows the main construction: an initial block to
the boundary (or a wait until resilience carries the impact state there),
then continuous selling that keeps the state on the curve until the position
is gone.  Variants cover two-sided execution (an initial buy block from deep
in the buy region), acquisition (the mirror problem for a rising market),
and the zero-drift finite-horizon type-A strategy with constant-rate flow.

Schedules are deterministic value objects; randomness never enters here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .boundary import (
    AcquisitionBoundary,
    CriticalPoints,
    FreeBoundary,
    acquisition_ode_rhs,
    boundary_rate,
)
from .errors import (
    AdmissibilityError,
    BoundaryRangeError,
    ValidationError,
)
from .market import MarketSpec

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Block:
    """Instantaneous trade of ``size`` shares sold (negative = bought)."""

    t: float
    size: float


@dataclass(frozen=True)
class Wait:
    t0: float
    duration: float


@dataclass(frozen=True)
class BoundaryFollow:
    """Continuous trading that keeps the state on the free boundary.

    Entered at ``t0`` with time-to-completion ``duration``; the position at
    time t inside the segment is read off the curve at tau = t0 + duration - t.
    """

    t0: float
    duration: float


@dataclass(frozen=True)
class Flow:
    """Constant-rate selling (dA/dt = rate) that holds the impact at y_hold."""

    t0: float
    duration: float
    rate: float
    y_hold: float


@dataclass(frozen=True)
class ConstantRate:
    """Constant-rate selling with the impact left to evolve freely.

    dY = (-h(Y) - rate) dt; closed form for linear h, RK4 otherwise.  Used
    by reference strategies (TWAP and perturbations), never by the optimal
    constructions.
    """

    t0: float
    duration: float
    rate: float


@dataclass(frozen=True)
class Schedule:
    """Deterministic execution plan: blocks, waits, and continuous segments.

    ``theta_init`` is the position to liquidate, or the target quantity for
    acquisition schedules.  ``state(t)`` reports holdings and impact at any
    time in [0, terminal_time], post-jump at block times; for acquisition
    kind the holdings column is the cumulative quantity acquired so far, so
    jump identities dA = -dTheta and dY = -dA hold for every kind.
    """

    kind: str
    y_init: float
    theta_init: float
    segments: tuple
    terminal_time: float
    spec: MarketSpec = field(compare=False)
    boundary: object = field(default=None, compare=False)

    @property
    def initial_block(self) -> float:
        total = 0.0
        for seg in self.segments:
            if isinstance(seg, Block) and seg.t == 0.0:
                total += seg.size
        return total

    @property
    def final_block(self) -> float:
        total = 0.0
        for seg in self.segments:
            if isinstance(seg, Block) and seg.t == self.terminal_time > 0.0:
                total += seg.size
        return total

    @property
    def wait_time(self) -> float:
        return sum(s.duration for s in self.segments if isinstance(s, Wait))

    @property
    def boundary_segment(self) -> BoundaryFollow | None:
        for seg in self.segments:
            if isinstance(seg, BoundaryFollow):
                return seg
        return None

    def state(self, t: float) -> tuple[float, float]:
        """Holdings and impact (theta_t, y_t) at time t, cadlag at jumps.

        Both jump identities reduce to the same update: dTheta = -dA and
        dY = -dA, with the acquisition holdings column starting at 0.
        """

        t = float(t)
        if t < 0.0 or t > self.terminal_time * (1.0 + 1e-12) + 1e-12:
            raise ValidationError(
                f"state: t={t!r} outside [0, {self.terminal_time!r}]"
            )
        t = min(t, self.terminal_time)
        theta = 0.0 if self.kind == "acquisition" else self.theta_init
        y = self.y_init
        for seg in self.segments:
            if isinstance(seg, Block):
                if t < seg.t:
                    break
                theta -= seg.size
                y -= seg.size
                continue
            end = seg.t0 + seg.duration
            clip = min(t, end)
            if isinstance(seg, Wait):
                y = _drift(self.spec, y, clip - seg.t0)
            elif isinstance(seg, Flow):
                theta -= seg.rate * (clip - seg.t0)
                y = seg.y_hold
            elif isinstance(seg, ConstantRate):
                theta -= seg.rate * (clip - seg.t0)
                y = _rate_impact(self.spec, y, seg.rate, clip - seg.t0)
            else:
                tau = seg.t0 + seg.duration - clip
                y = self.boundary.y_of_tau(tau)
                if self.kind == "acquisition":
                    theta = self.theta_init - self.boundary.theta_of_y(y)
                else:
                    theta = self.boundary.theta_of_y(y)
            if t < end:
                break
        return theta, y

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "initial_block": self.initial_block,
            "wait_time": self.wait_time,
            "terminal_time": self.terminal_time,
        }


def _drift(spec: MarketSpec, y: float, dt: float) -> float:
    """Impact after waiting dt from y under dY = -h(Y) dt."""

    if dt <= 0.0:
        return y
    if spec.beta is not None:
        return y * math.exp(-spec.beta * dt)
    k1 = -spec.h(y)
    n = max(8, int(math.ceil(dt / 1e-3)))
    step = dt / n
    for _ in range(n):
        k1 = -spec.h(y)
        k2 = -spec.h(y + 0.5 * step * k1)
        k3 = -spec.h(y + 0.5 * step * k2)
        k4 = -spec.h(y + step * k3)
        y = y + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return y


def _rate_impact(spec: MarketSpec, y: float, rate: float, dt: float) -> float:
    """Impact after selling at constant rate for dt: dY = (-h(Y) - rate) dt."""

    if dt <= 0.0:
        return y
    if spec.beta is not None:
        b = spec.beta
        return (y + rate / b) * math.exp(-b * dt) - rate / b
    n = max(8, int(math.ceil(dt / 1e-3)))
    step = dt / n
    for _ in range(n):
        k1 = -spec.h(y) - rate
        k2 = -spec.h(y + 0.5 * step * k1) - rate
        k3 = -spec.h(y + 0.5 * step * k2) - rate
        k4 = -spec.h(y + step * k3) - rate
        y = y + step * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return y


def _wait_duration(spec: MarketSpec, y_from: float, y_to: float) -> float:
    """Time for resilience alone to carry the impact from y_from to y_to."""

    if y_from == y_to:
        return 0.0
    if spec.beta is not None:
        return math.log(y_from / y_to) / spec.beta
    val, _ = quad(lambda u: -1.0 / spec.h(u), y_from, y_to,
                  epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(val)


def _landing_block(fb: FreeBoundary, y_init: float, theta_init: float,
                   lo: float, hi: float) -> float:
    """Signed block d with (y_init - d, theta_init - d) on the boundary."""

    def g(d):
        return (y_init - d) - fb.y_of_theta(theta_init - d)

    glo, ghi = g(lo), g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if glo * ghi > 0.0:
        raise BoundaryRangeError(
            f"block landing not bracketed on [{lo:.6g}, {hi:.6g}]; boundary "
            f"solved to theta_end={fb.theta_end:.6g}"
        )
    return float(brentq(g, lo, hi, xtol=1e-14, rtol=4 * _EPS))


def optimal_schedule(
    spec: MarketSpec,
    cp: CriticalPoints,
    fb: FreeBoundary,
    y_init: float,
    theta_init: float,
) -> Schedule:
    """Monotone liquidation plan for theta_init shares from impact y_init.

    Cases: full position at once when the state is at or beyond the sell-all
    line y - theta >= y0; a partial block down to the boundary from the sell
    region; a wait until resilience reaches the boundary from the wait
    region; then continuous boundary-following until the position hits zero.
    """

    if not (theta_init >= 0.0) or not math.isfinite(theta_init):
        raise ValidationError(
            f"theta_init must be a finite nonnegative real, got {theta_init}"
        )
    if not math.isfinite(y_init):
        raise ValidationError(f"y_init must be finite, got {y_init}")
    spec.require_in_domain(y_init, "y_init")
    if theta_init == 0.0:
        return Schedule("liquidation", y_init, 0.0, (), 0.0, spec, fb)
    if y_init - theta_init >= cp.y0:
        segs = (Block(0.0, theta_init),)
        return Schedule("liquidation", y_init, theta_init, segs, 0.0, spec, fb)

    y_b = fb.y_of_theta(theta_init)
    tol = 1e-10 * (1.0 + abs(y_b))
    if y_init > y_b + tol:
        hi = min(theta_init, y_init - y_b)
        d = _landing_block(fb, y_init, theta_init, 0.0, hi)
        y_land = y_init - d
        tau = fb.tau_of_y(y_land)
        segs = (Block(0.0, d), BoundaryFollow(0.0, tau))
        return Schedule("liquidation", y_init, theta_init, segs, tau, spec, fb)
    if y_init < y_b - tol:
        s = _wait_duration(spec, y_init, y_b)
        tau = fb.tau_of_y(y_b)
        segs = (Wait(0.0, s), BoundaryFollow(s, tau))
        return Schedule("liquidation", y_init, theta_init, segs, s + tau, spec, fb)
    tau = fb.tau_of_y(y_init)
    segs = (BoundaryFollow(0.0, tau),)
    return Schedule("liquidation", y_init, theta_init, segs, tau, spec, fb)


def optimal_schedule_two_sided(
    spec: MarketSpec,
    cp: CriticalPoints,
    fb: FreeBoundary,
    y_init: float,
    theta_init: float,
) -> Schedule:
    """Two-sided plan: an initial buy block from the buy region, else the
    monotone liquidation schedule unchanged.

    The buy block moves along the line y - theta = const up to the boundary;
    from there the position theta_init + |block| is liquidated along the
    curve.  States at or right of the boundary never trigger buying.
    """

    if not (theta_init >= 0.0) or not math.isfinite(theta_init):
        raise ValidationError(
            f"theta_init must be a finite nonnegative real, got {theta_init}"
        )
    spec.require_in_domain(y_init, "y_init")
    if y_init - theta_init >= cp.y0:
        return optimal_schedule(spec, cp, fb, y_init, theta_init)
    in_range = theta_init <= fb.theta_end * (1.0 + 1e-12)
    if in_range:
        y_b = fb.y_of_theta(theta_init)
        tol = 1e-10 * (1.0 + abs(y_b))
        if y_init >= y_b - tol:
            return optimal_schedule(spec, cp, fb, y_init, theta_init)
    lo = -(fb.theta_end - theta_init) * (1.0 - 1e-12)
    if lo >= 0.0:
        raise fb._range_error(
            f"two-sided landing from (y={y_init!r}, theta={theta_init!r})"
        )
    d = _landing_block(fb, y_init, theta_init, lo, 0.0)
    y_land = y_init - d
    tau = fb.tau_of_y(y_land)
    segs = (Block(0.0, d), BoundaryFollow(0.0, tau))
    return Schedule("two_sided", y_init, theta_init, segs, tau, spec, fb)


def acquisition_schedule(
    spec: MarketSpec,
    ab: AcquisitionBoundary,
    y_init: float,
    theta_target: float,
) -> Schedule:
    """Minimum-cost purchase of theta_target shares, mirroring liquidation.

    Deep below the buy boundary the whole quantity is bought at once (the
    full purchase leaves the impact at or under the curve's foot); otherwise
    a block lands on the curve, or the trader waits for elevated impact to
    decay down to it, and the remainder is bought continuously along the
    curve until it completes at the foot.  The schedule's holdings column is
    the cumulative quantity acquired, increasing from 0 to theta_target.
    """

    if not (theta_target >= 0.0) or not math.isfinite(theta_target):
        raise ValidationError(
            f"theta_target must be a finite nonnegative real, got {theta_target}"
        )
    spec.require_in_domain(y_init, "y_init")
    if theta_target == 0.0:
        return Schedule("acquisition", y_init, 0.0, (), 0.0, spec, ab)
    foot = ab.y_start
    if y_init + theta_target <= foot:
        segs = (Block(0.0, -theta_target),)
        return Schedule("acquisition", y_init, theta_target, segs, 0.0, spec, ab)

    if theta_target > ab.theta_end * (1.0 + 1e-12):
        raise ab._range_error(
            f"acquisition_schedule(theta_target={theta_target!r})"
        )
    tol = 1e-10 * (1.0 + abs(foot))
    if y_init < foot:
        remaining_here = None
    elif y_init > ab.y_end * (1.0 + 1e-12) + 1e-12:
        remaining_here = math.inf
    else:
        remaining_here = ab.theta_of_y(y_init)
    if remaining_here is not None and abs(remaining_here - theta_target) <= tol:
        tau = ab.tau_of_y(y_init)
        segs = (BoundaryFollow(0.0, tau),)
        return Schedule("acquisition", y_init, theta_target, segs, tau, spec, ab)
    if remaining_here is not None and remaining_here > theta_target:
        y_b = ab.y_of_theta(theta_target)
        s = _acq_wait_duration(spec, y_init, y_b)
        tau = ab.tau_of_y(y_b)
        segs = (Wait(0.0, s), BoundaryFollow(s, tau))
        return Schedule("acquisition", y_init, theta_target, segs, s + tau,
                        spec, ab)

    def g(b):
        return ab.theta_of_y(y_init + b) - (theta_target - b)

    b_min = max(0.0, foot - y_init)
    if g(theta_target) < 0.0:
        raise ab._range_error(
            f"acquisition landing from (y={y_init!r}, target={theta_target!r})"
        )
    b = float(brentq(g, b_min, theta_target, xtol=1e-14, rtol=4 * _EPS))
    y_land = y_init + b
    tau = ab.tau_of_y(y_land)
    segs = (Block(0.0, -b), BoundaryFollow(0.0, tau))
    return Schedule("acquisition", y_init, theta_target, segs, tau, spec, ab)


def _acq_wait_duration(spec: MarketSpec, y_from: float, y_to: float) -> float:
    """Decay time from y_from down to y_to, both positive."""

    if y_from == y_to:
        return 0.0
    if spec.beta is not None:
        return math.log(y_from / y_to) / spec.beta
    val, _ = quad(lambda u: 1.0 / spec.h(u), y_to, y_from,
                  epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(val)


def _h_inverse(spec: MarketSpec, x: float) -> float:
    if spec.beta is not None:
        return x / spec.beta
    if x == 0.0:
        return 0.0
    lo, hi = spec.domain
    a, b = (0.0, 1.0) if x > 0.0 else (-1.0, 0.0)
    for _ in range(200):
        if spec.h(a) <= x <= spec.h(b):
            break
        if x > 0.0:
            b = min(b * 2.0, hi - 1e-12 * (1.0 + abs(hi))) if math.isfinite(hi) else b * 2.0
        else:
            a = max(a * 2.0, lo + 1e-12 * (1.0 + abs(lo))) if math.isfinite(lo) else a * 2.0
    return float(brentq(lambda u: spec.h(u) - x, a, b, xtol=1e-14, rtol=4 * _EPS))


def _golden_min(fn, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Golden-section minimizer for a convex function on [lo, hi]."""

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    scale = 1.0 + max(abs(lo), abs(hi))
    while b - a > tol * scale:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def type_a_schedule(
    spec: MarketSpec,
    horizon: float,
    y_init: float,
    theta_init: float,
) -> Schedule:
    """Zero-drift finite-horizon plan: block, constant-rate flow, final block.

    Requires delta = 0.  The terminal impact y* minimizes the convex
    G(y) = F(y) + T g((y_init - theta_init - y) / T) with g(x) = f(h^{-1}(x)) x
    over the window of admissible terminal states; the flow rate holds the
    impact constant between the blocks, so realized proceeds meet the
    F(Y_init) - G(y*) bound exactly.
    """

    if spec.delta != 0.0:
        raise ValidationError(
            f"type-A schedules require delta = 0, got delta={spec.delta}"
        )
    if not (horizon > 0.0) or not math.isfinite(horizon):
        raise ValidationError(f"horizon must be a positive real, got {horizon}")
    if not (theta_init >= 0.0) or not math.isfinite(theta_init):
        raise ValidationError(
            f"theta_init must be a finite nonnegative real, got {theta_init}"
        )
    spec.require_in_domain(y_init, "y_init")
    if theta_init == 0.0 and y_init == 0.0:
        return Schedule("type_a", 0.0, 0.0, (), horizon, spec, None)

    xi = y_init - theta_init
    lower = [
        (xi, "post-block impact Y_0 <= 0"),
        (xi - horizon * float(spec.h(y_init)), "initial block size >= 0"),
    ]
    if xi <= 0.0:
        psi = lambda y: y - _h_inverse(spec, (xi - y) / horizon)
        y_up = float(brentq(psi, xi, 0.0, xtol=1e-14, rtol=4 * _EPS)) \
            if psi(xi) < 0.0 else xi
    else:
        y_up = xi - 1.0
    upper = [
        (xi - horizon * float(spec.h(xi)), "initial block size <= theta_init"),
        (y_up, "terminal block size >= 0"),
    ]
    lo, lo_name = max(lower)
    hi, hi_name = min(upper)
    if lo > hi + 1e-12 * (1.0 + abs(lo)):
        raise AdmissibilityError(
            f"type A inadmissible: constraint '{lo_name}' (y* >= {lo:.6g}) "
            f"conflicts with '{hi_name}' (y* <= {hi:.6g})"
        )
    hi = max(hi, lo)

    def g_fn(x):
        return float(spec.f(_h_inverse(spec, x))) * x

    def G(y):
        return float(spec.F(y)) + horizon * g_fn((xi - y) / horizon)

    y_star = lo if hi == lo else _golden_min(G, lo, hi)
    probe = 1e-6 * (1.0 + abs(y_star))
    g0 = G(y_star)
    for cand in (y_star - probe, y_star + probe):
        if lo <= cand <= hi and G(cand) < g0 - 1e-10 * (1.0 + abs(g0)):
            raise ValidationError(
                "type-A minimizer certification failed: G decreases at "
                f"y* = {y_star!r}"
            )

    x_star = (xi - y_star) / horizon
    y_hold = _h_inverse(spec, x_star)
    block0 = y_init - y_hold
    block_T = y_hold - y_star
    rate = -x_star
    clamp = 1e-13 * (1.0 + abs(theta_init))
    if -clamp <= block0 < 0.0:
        block0 = 0.0
    if -clamp <= block_T < 0.0:
        block_T = 0.0
    segs = []
    if block0 != 0.0:
        segs.append(Block(0.0, block0))
    segs.append(Flow(0.0, horizon, rate, y_hold))
    if block_T != 0.0:
        segs.append(Block(horizon, block_T))
    return Schedule("type_a", y_init, theta_init, tuple(segs), horizon,
                    spec, None)


def type_a_proceeds(spec: MarketSpec, schedule: Schedule) -> float:
    """Realized proceeds of a type-A schedule (deterministic since delta=0)."""

    if schedule.kind != "type_a":
        raise ValidationError("type_a_proceeds expects a type_a schedule")
    total = 0.0
    theta = schedule.theta_init
    y = schedule.y_init
    for seg in schedule.segments:
        if isinstance(seg, Block):
            total += float(spec.F(y)) - float(spec.F(y - seg.size))
            y -= seg.size
            theta -= seg.size
        elif isinstance(seg, Flow):
            total += float(spec.f(seg.y_hold)) * seg.rate * seg.duration
            theta -= seg.rate * seg.duration
            y = seg.y_hold
    return total


@dataclass(frozen=True)
class Trajectory:
    """Sampled execution path: times with holdings, impact, sales, and rate.

    Rows at block times appear twice, pre-jump then post-jump, so jumps in
    a, theta, and y are explicit in the samples.  ``a`` is cumulative net
    shares sold (negative after net buying); rate is the instantaneous dA/dt.
    """

    t: np.ndarray
    theta: np.ndarray
    y: np.ndarray
    a: np.ndarray
    rate: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,theta,y,a,rate\n")
            for row in zip(self.t, self.theta, self.y, self.a, self.rate):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    def rows(self) -> list[dict]:
        return [
            {"t": t, "theta": th, "y": yy, "a": aa, "rate": rr}
            for t, th, yy, aa, rr in zip(self.t, self.theta, self.y,
                                         self.a, self.rate)
        ]


def _segment_rate(spec: MarketSpec, schedule: Schedule, seg, t: float,
                  y: float) -> float:
    if isinstance(seg, (Flow, ConstantRate)):
        return seg.rate
    if isinstance(seg, Wait):
        return 0.0
    if schedule.kind == "acquisition":
        tp = acquisition_ode_rhs(spec, schedule.boundary.eta, y)
        return -float(spec.h(y)) * tp / (1.0 + tp)
    return boundary_rate(spec, schedule.boundary.cp, y)


def execute(spec: MarketSpec, schedule: Schedule, dt: float | None = None) -> Trajectory:
    """Sample a schedule into a trajectory on a grid of step roughly dt.

    Default dt is terminal_time / 1000, with extra geometrically spaced
    samples just after t = 0 where the rate changes fastest.  Boundary
    segments are evaluated exactly from the curve parametrization; waits
    integrate the resilience ODE.
    """

    T = schedule.terminal_time
    if dt is None:
        dt = T / 1000.0 if T > 0.0 else 1.0
    if not (dt > 0.0):
        raise ValidationError(f"dt must be positive, got {dt}")

    times = {0.0, T} if T > 0.0 else {0.0}
    if T > 0.0:
        times.update(np.arange(dt, T, dt).tolist())
        times.update(np.geomspace(dt / 64.0, min(dt, T), 7).tolist())
        for seg in schedule.segments:
            if isinstance(seg, Block):
                times.add(seg.t)
            else:
                times.add(seg.t0)
                times.add(min(seg.t0 + seg.duration, T))
    grid = sorted(times)

    block_times = {seg.t for seg in schedule.segments if isinstance(seg, Block)}

    rows_t, rows_theta, rows_y, rows_a, rows_rate = [], [], [], [], []

    def a_of(theta):
        if schedule.kind == "acquisition":
            return -theta
        return schedule.theta_init - theta

    def seg_containing(t, started_before=False):
        current = None
        for seg in schedule.segments:
            if isinstance(seg, Block):
                continue
            t0 = seg.t0
            if (t0 < t if started_before else t0 <= t) and t <= t0 + seg.duration:
                current = seg
        return current

    def emit(t, theta, y, rate):
        rows_t.append(t)
        rows_theta.append(theta)
        rows_y.append(y)
        rows_a.append(a_of(theta))
        rows_rate.append(rate)

    for t in grid:
        if t in block_times:
            pre_theta, pre_y = _pre_block_state(schedule, t)
            seg = seg_containing(t, started_before=True)
            pre_rate = _segment_rate(spec, schedule, seg, t, pre_y) if seg else 0.0
            emit(t, pre_theta, pre_y, pre_rate)
        theta, y = schedule.state(t)
        seg = seg_containing(t)
        rate = _segment_rate(spec, schedule, seg, t, y) if seg else 0.0
        emit(t, theta, y, rate)

    return Trajectory(
        t=np.asarray(rows_t), theta=np.asarray(rows_theta),
        y=np.asarray(rows_y), a=np.asarray(rows_a),
        rate=np.asarray(rows_rate),
    )


def _pre_block_state(schedule: Schedule, t: float) -> tuple[float, float]:
    """State just before the block at time t."""

    theta = 0.0 if schedule.kind == "acquisition" else schedule.theta_init
    y = schedule.y_init
    spec = schedule.spec
    for seg in schedule.segments:
        if isinstance(seg, Block):
            if seg.t >= t:
                break
            theta -= seg.size
            y -= seg.size
            continue
        end = seg.t0 + seg.duration
        if seg.t0 >= t:
            break
        clip = min(t, end)
        if isinstance(seg, Wait):
            y = _drift(spec, y, clip - seg.t0)
        elif isinstance(seg, Flow):
            theta -= seg.rate * (clip - seg.t0)
            y = seg.y_hold
        elif isinstance(seg, ConstantRate):
            theta -= seg.rate * (clip - seg.t0)
            y = _rate_impact(spec, y, seg.rate, clip - seg.t0)
        else:
            tau = seg.t0 + seg.duration - clip
            y = schedule.boundary.y_of_tau(tau)
            if schedule.kind == "acquisition":
                theta = schedule.theta_init - schedule.boundary.theta_of_y(y)
            else:
                theta = schedule.boundary.theta_of_y(y)
    return theta, y


def schedule_json(spec: MarketSpec, schedule: Schedule,
                  dt: float | None = None) -> dict:
    """JSON-ready dict: kind, blocks, wait, horizon, and sampled path."""

    traj = execute(spec, schedule, dt=dt)
    out = schedule.describe()
    out["samples"] = traj.rows()
    return out


def write_schedule_json(spec: MarketSpec, schedule: Schedule, path,
                        dt: float | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schedule_json(spec, schedule, dt=dt), fh, indent=2)
        fh.write("\n")
