"""Monte-Carlo layer: GBM price paths, discounted proceeds, martingale
checks of the value process, perturbation dominance, and the comparison
against the additive-impact benchmark of Lorenz and Schied.

Every estimator draws one RNG substream per path, keyed by (seed, path
index), and reduces over a fixed batch partition.  Results are therefore
bitwise reproducible and independent of how the work would be split across
workers.  Stochastic integrals use left-point sums throughout.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import PchipInterpolator

from .boundary import (
    acquisition_ode_rhs,
    boundary_ode_rhs,
    critical_points,
    solve_boundary,
)
from .errors import ValidationError
from .market import MarketSpec, PowerLawBook, power_law_spec
from .schedule import (
    Block,
    BoundaryFollow,
    ConstantRate,
    Flow,
    Schedule,
    Trajectory,
    Wait,
    _drift,
    _rate_impact,
    execute,
    optimal_schedule,
)

_BATCH = 4096


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the unaffected price S_t = s0 * E(mu t + sigma W)_t.

    sigma = 0 is accepted and collapses the paths to s0 * exp(mu t); the
    deterministic limit is what the quadrature cross-checks run on.  ``dt``
    is the requested sampling step; grids round it to a whole number of
    steps and must resolve the horizon to at least 100 of them.
    """

    mu: float
    sigma: float
    gamma: float
    s0: float
    horizon: float
    dt: float
    n_paths: int
    seed: int = 0

    def __post_init__(self):
        for name in ("mu", "sigma", "gamma", "s0", "horizon", "dt"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(f"{name} must be a finite real, got {v!r}")
        if self.sigma < 0.0:
            raise ValidationError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.s0 > 0.0:
            raise ValidationError(f"s0 must be positive, got {self.s0}")
        if not self.horizon > 0.0:
            raise ValidationError(f"horizon must be positive, got {self.horizon}")
        if not self.dt > 0.0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.dt > self.horizon / 100.0 * (1.0 + 1e-12):
            raise ValidationError(
                f"dt={self.dt} too coarse: need dt <= horizon/100 = "
                f"{self.horizon / 100.0}"
            )
        if not isinstance(self.n_paths, int) or self.n_paths < 1:
            raise ValidationError(
                f"n_paths must be a positive integer, got {self.n_paths!r}"
            )
        if not isinstance(self.seed, int):
            raise ValidationError(f"seed must be an integer, got {self.seed!r}")

    @property
    def delta(self) -> float:
        return self.gamma - self.mu

    def require_positive_delta(self) -> None:
        if not self.delta > 0.0:
            raise ValidationError(
                f"infinite-horizon objective needs delta = gamma - mu > 0, "
                f"got {self.delta}"
            )

    def times(self) -> np.ndarray:
        n = max(100, int(round(self.horizon / self.dt)))
        return np.linspace(0.0, self.horizon, n + 1)


@dataclass(frozen=True)
class PathBundle:
    """Simulated unaffected-price paths on a shared grid.

    ``sbar`` has one row per path; ``dw`` holds the Brownian increments that
    generated it, so downstream models can ride the same noise.
    """

    times: np.ndarray
    sbar: np.ndarray
    dw: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.sbar.shape[0]


def _path_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_block(config: SimConfig, times: np.ndarray, start: int,
                count: int) -> tuple[np.ndarray, np.ndarray]:
    """Brownian increments and GBM values for paths start..start+count-1."""

    steps = np.diff(times)
    n = len(steps)
    dw = np.empty((count, n))
    for i in range(count):
        dw[i] = _path_rng(config.seed, start + i).standard_normal(n)
    dw *= np.sqrt(steps)
    drift = (config.mu - 0.5 * config.sigma ** 2) * steps
    logs = np.cumsum(drift + config.sigma * dw, axis=1)
    sbar = np.empty((count, n + 1))
    sbar[:, 0] = config.s0
    sbar[:, 1:] = config.s0 * np.exp(logs)
    return sbar, dw


def _iter_path_blocks(config: SimConfig, times: np.ndarray,
                      batch: int = _BATCH):
    for start in range(0, config.n_paths, batch):
        count = min(batch, config.n_paths - start)
        sbar, dw = _draw_block(config, times, start, count)
        yield start, sbar, dw


def gbm_paths(config: SimConfig) -> PathBundle:
    """Sample all paths of the config into one bundle.

    Exact GBM sampling at the grid times; same seed gives a bitwise
    identical bundle.  Memory is n_paths * (steps + 1) doubles for prices
    plus the same again for increments, so very large runs should use the
    streaming estimators instead of materializing a bundle.
    """

    times = config.times()
    sbar = np.empty((config.n_paths, len(times)))
    dw = np.empty((config.n_paths, len(times) - 1))
    for start, sb, dwb in _iter_path_blocks(config, times):
        sbar[start:start + sb.shape[0]] = sb
        dw[start:start + dwb.shape[0]] = dwb
    return PathBundle(times=times, sbar=sbar, dw=dw, seed=config.seed)


_DENSE_CURVES = weakref.WeakKeyDictionary()


def _curve_interpolators(schedule: Schedule):
    """Dense time-to-landing parametrization of the schedule's boundary.

    The stored waypoint table is too sparse for trajectory-grid accuracy, so
    both curve coordinates are resampled through the boundary's exact maps
    and cached per boundary object.
    """

    bdry = schedule.boundary
    cached = _DENSE_CURVES.get(bdry)
    if cached is None:
        tau_hi = float(bdry.points[-1, 2])
        tg = np.linspace(0.0, tau_hi, 2049)
        yg = np.array([bdry.y_of_tau(u) for u in tg])
        thg = np.array([float(bdry.theta_of_y(v)) for v in yg])
        cached = (PchipInterpolator(tg, yg), PchipInterpolator(tg, thg),
                  tau_hi)
        _DENSE_CURVES[bdry] = cached
    return cached


def deterministic_trajectory(spec: MarketSpec, schedule: Schedule,
                             times: np.ndarray):
    """Holdings and impact at the given times, plus the block list.

    Vectorized companion of Schedule.state for estimator grids: values at
    block instants are post-jump, and times past the terminal time continue
    with the position frozen while the impact relaxes under h.  Returns
    (theta, y, blocks) where blocks is a list of (time, pre-jump impact,
    size) triples.
    """

    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) < 0.0) or t[0] < 0.0:
        raise ValidationError("times must be a nondecreasing 1-D array from t >= 0")
    theta = np.empty_like(t)
    y = np.empty_like(t)
    filled = np.zeros(len(t), dtype=bool)
    tiny = 1e-12 * (1.0 + float(t[-1]))

    theta_run = 0.0 if schedule.kind == "acquisition" else schedule.theta_init
    y_run = schedule.y_init
    t_run = 0.0
    blocks = []
    curves = None

    for seg in schedule.segments:
        if isinstance(seg, Block):
            blocks.append((seg.t, y_run, seg.size))
            theta_run -= seg.size
            y_run -= seg.size
            t_run = seg.t
            sel = np.abs(t - seg.t) <= tiny
            theta[sel] = theta_run
            y[sel] = y_run
            filled[sel] = True
            continue
        end = seg.t0 + seg.duration
        sel = (t >= seg.t0 - tiny) & (t <= end + tiny)
        ts = np.clip(t[sel], seg.t0, end)
        if isinstance(seg, Wait):
            if spec.beta is not None:
                y[sel] = y_run * np.exp(-spec.beta * (ts - seg.t0))
            else:
                y[sel] = [_drift(spec, y_run, u - seg.t0) for u in ts]
            theta[sel] = theta_run
            y_run = _drift(spec, y_run, seg.duration)
        elif isinstance(seg, Flow):
            theta[sel] = theta_run - seg.rate * (ts - seg.t0)
            y[sel] = seg.y_hold
            theta_run -= seg.rate * seg.duration
            y_run = seg.y_hold
        elif isinstance(seg, ConstantRate):
            theta[sel] = theta_run - seg.rate * (ts - seg.t0)
            if spec.beta is not None:
                b = spec.beta
                y[sel] = (y_run + seg.rate / b) * np.exp(-b * (ts - seg.t0)) \
                    - seg.rate / b
            else:
                y[sel] = [_rate_impact(spec, y_run, seg.rate, u - seg.t0)
                          for u in ts]
            theta_run -= seg.rate * seg.duration
            y_run = _rate_impact(spec, y_run, seg.rate, seg.duration)
        else:
            if curves is None:
                curves = _curve_interpolators(schedule)
            y_of_tau, theta_of_tau, tau_hi = curves
            tau = np.clip(end - ts, 0.0, tau_hi)
            y[sel] = y_of_tau(tau)
            th_curve = theta_of_tau(tau)
            if schedule.kind == "acquisition":
                theta[sel] = schedule.theta_init - th_curve
                theta_run = schedule.theta_init
            else:
                theta[sel] = th_curve
                theta_run = 0.0
            y_run = schedule.boundary.y_of_tau(0.0)
        filled[sel] = True
        t_run = end

    rest = ~filled
    if np.any(rest):
        ts = t[rest]
        if np.any(ts < t_run - tiny):
            raise ValidationError("schedule segments leave a gap before t_run")
        theta[rest] = theta_run
        if spec.beta is not None:
            y[rest] = y_run * np.exp(-spec.beta * np.maximum(ts - t_run, 0.0))
        else:
            y[rest] = [_drift(spec, y_run, max(u - t_run, 0.0)) for u in ts]
    return theta, y, blocks


@dataclass(frozen=True)
class ProceedsLedger:
    """Discounted proceeds of one schedule over a bundle of price paths.

    ``l_cum`` samples the running proceeds process L_t at the grid times
    (one row per path); ``l_total`` is its final column, split into the
    block and continuous-trade components.
    """

    times: np.ndarray
    l_total: np.ndarray
    block_component: np.ndarray
    continuous_component: np.ndarray
    l_cum: np.ndarray
    gamma: float


def pathwise_proceeds(spec: MarketSpec, schedule: Schedule, path: PathBundle,
                      gamma: float) -> ProceedsLedger:
    """Realized discounted proceeds along each price path.

    Continuous trading is summed by the left-point rule
    sum_i exp(-gamma t_i) f(Y_{t_i}) S_{t_i} dA^c_i; block trades contribute
    exp(-gamma t_b) S_{t_b} (F(Y-) - F(Y- - dA)).  Blocks that fall between
    grid nodes use linearly interpolated prices.
    """

    times = np.asarray(path.times, dtype=float)
    sbar = np.atleast_2d(np.asarray(path.sbar, dtype=float))
    theta, y, blocks = deterministic_trajectory(spec, schedule, times)
    if schedule.kind == "acquisition":
        a = -theta
    else:
        a = schedule.theta_init - theta

    tiny = 1e-12 * (1.0 + float(times[-1]))
    blk_cum = np.zeros_like(times)
    for t_b, _, size in blocks:
        blk_cum[times >= t_b - tiny] += size
    a_cont = a - blk_cum

    disc = np.exp(-gamma * times[:-1])
    f_left = np.asarray(spec.f(y[:-1]), dtype=float)
    w = disc * f_left * np.diff(a_cont)

    l_cum = np.zeros_like(sbar)
    np.cumsum(w * sbar[:, :-1], axis=1, out=l_cum[:, 1:])
    block_total = np.zeros(sbar.shape[0])
    for t_b, y_pre, size in blocks:
        val = math.exp(-gamma * t_b) * float(spec.F(y_pre) - spec.F(y_pre - size))
        s_at = _price_at(times, sbar, t_b)
        l_cum[:, times >= t_b - tiny] += (val * s_at)[:, None]
        block_total += val * s_at

    l_total = l_cum[:, -1].copy()
    if np.asarray(path.sbar).ndim == 1:
        return ProceedsLedger(times, l_total[0], float(block_total[0]),
                              float(l_total[0] - block_total[0]),
                              l_cum[0], gamma)
    return ProceedsLedger(times, l_total, block_total,
                          l_total - block_total, l_cum, gamma)


def _price_at(times: np.ndarray, sbar: np.ndarray, t: float) -> np.ndarray:
    idx = np.searchsorted(times, t)
    if idx < len(times) and abs(times[idx] - t) <= 1e-12 * (1.0 + t):
        return sbar[:, idx]
    if idx > 0 and abs(times[idx - 1] - t) <= 1e-12 * (1.0 + t):
        return sbar[:, idx - 1]
    if idx == 0 or idx == len(times):
        raise ValidationError(f"block time {t!r} outside the path grid")
    lo, hi = times[idx - 1], times[idx]
    lam = (t - lo) / (hi - lo)
    return (1.0 - lam) * sbar[:, idx - 1] + lam * sbar[:, idx]


def analytic_J(spec: MarketSpec, schedule: Schedule, s0: float,
               delta: float) -> float:
    """Deterministic value of a schedule: s0 times the e^{-delta t}-weighted
    proceeds functional.

    Blocks contribute exactly through the F antiderivative, boundary
    segments by a change of variables to the impact state, rate segments by
    closed form or adaptive quadrature.  Matches E[L_infinity] for the
    schedule under any driving martingale with drift mu = gamma - delta.
    """

    total = 0.0
    y_run = schedule.y_init
    for seg in schedule.segments:
        if isinstance(seg, Block):
            total += math.exp(-delta * seg.t) * float(
                spec.F(y_run) - spec.F(y_run - seg.size))
            y_run -= seg.size
        elif isinstance(seg, Wait):
            y_run = _drift(spec, y_run, seg.duration)
        elif isinstance(seg, Flow):
            if delta == 0.0:
                weight = seg.duration
            else:
                weight = -math.expm1(-delta * seg.duration) / delta
            total += float(spec.f(seg.y_hold)) * seg.rate \
                * math.exp(-delta * seg.t0) * weight
            y_run = seg.y_hold
        elif isinstance(seg, ConstantRate):
            total += _constant_rate_value(spec, seg, y_run, delta)
            y_run = _rate_impact(spec, y_run, seg.rate, seg.duration)
        elif isinstance(seg, BoundaryFollow):
            total += _follow_value(spec, schedule, seg, delta)
            y_run = schedule.boundary.y_of_tau(0.0)
        else:
            raise ValidationError(f"unknown segment type {type(seg).__name__}")
    return s0 * total


def _constant_rate_value(spec: MarketSpec, seg: ConstantRate, y_from: float,
                         delta: float) -> float:
    if seg.rate == 0.0 or seg.duration <= 0.0:
        return 0.0
    if spec.beta is not None:
        b = spec.beta
        shift = seg.rate / b

        def integrand(u):
            yu = (y_from + shift) * math.exp(-b * u) - shift
            return math.exp(-delta * (seg.t0 + u)) * float(spec.f(yu))

        val, _ = quad(integrand, 0.0, seg.duration,
                      epsabs=1e-13, epsrel=1e-11, limit=200)
        return seg.rate * val

    def rhs(u, state):
        yu, _ = state
        return [-float(spec.h(yu)) - seg.rate,
                math.exp(-delta * (seg.t0 + u)) * float(spec.f(yu)) * seg.rate]

    sol = solve_ivp(rhs, (0.0, seg.duration), [y_from, 0.0],
                    rtol=1e-11, atol=1e-13, method="RK45")
    if not sol.success:
        raise ValidationError(f"constant-rate integration failed: {sol.message}")
    return float(sol.y[1, -1])


def _follow_value(spec: MarketSpec, schedule: Schedule, seg: BoundaryFollow,
                  delta: float) -> float:
    bdry = schedule.boundary
    y_entry = bdry.y_of_tau(seg.duration)
    if schedule.kind == "acquisition":
        foot = bdry.y_start

        def integrand(yv):
            t = seg.t0 + seg.duration - bdry.tau_of_y(yv)
            slope = acquisition_ode_rhs(spec, bdry.eta, yv)
            return math.exp(-delta * t) * float(spec.f(yv)) * slope

        if y_entry <= foot:
            return 0.0
        val, _ = quad(integrand, foot, y_entry,
                      epsabs=1e-13, epsrel=1e-11, limit=200)
        return -float(val)

    y_top = bdry.y_of_tau(0.0)

    def integrand(yv):
        t = seg.t0 + seg.duration - bdry.tau_of_y(yv)
        slope = boundary_ode_rhs(spec, yv)
        return math.exp(-delta * t) * float(spec.f(yv)) * (-slope)

    if y_entry >= y_top:
        return 0.0
    val, _ = quad(integrand, y_entry, y_top,
                  epsabs=1e-13, epsrel=1e-11, limit=200)
    return float(val)


@dataclass(frozen=True)
class CheckpointEstimate:
    t: float
    mean: float
    std_error: float


@dataclass(frozen=True)
class MartingaleReport:
    """Monte-Carlo estimates of E[G_t] against the pre-trade value G_{0-}.

    ``martingale_consistent`` requires |mean - g0| <= 3 SE at every
    checkpoint; ``supermartingale_consistent`` only mean <= g0 + 3 SE.
    ``strictly_below`` is set when some checkpoint falls more than 3 SE
    short of g0, the signature of a strictly suboptimal strategy.
    """

    g0: float
    checkpoints: tuple
    n_paths: int
    seed: int
    martingale_consistent: bool
    supermartingale_consistent: bool
    strictly_below: bool
    max_abs_z: float

    def to_json(self) -> dict:
        return {
            "g0": self.g0,
            "checkpoints": [
                {"t": c.t, "estimate": c.mean, "std_error": c.std_error}
                for c in self.checkpoints
            ],
            "n_paths": self.n_paths,
            "seed": self.seed,
            "martingale_consistent": self.martingale_consistent,
            "supermartingale_consistent": self.supermartingale_consistent,
            "strictly_below": self.strictly_below,
            "max_abs_z": self.max_abs_z,
        }


def g_process_check(spec: MarketSpec, field, schedule: Schedule,
                    config: SimConfig, checkpoints=None,
                    two_sided: bool = False,
                    batch: int = _BATCH) -> MartingaleReport:
    """Estimate E[G_t] for G_t = L_t + e^{-gamma t} S_t V(Y_t, Theta_t).

    The optimal schedule makes G a martingale with G_0- = s0 V(y, theta);
    any other admissible schedule makes it a supermartingale.  Checkpoints
    default to {0, T/4, T/2, T} snapped to the simulation grid.  Paths are
    streamed in fixed batches, so memory stays flat in n_paths.
    two_sided swaps in the round-trip value function.
    """

    config.require_positive_delta()
    value_of = field.v_two_sided if two_sided else field.v
    T = config.horizon
    base = config.times()
    extra = {0.0, T}
    for seg in schedule.segments:
        if isinstance(seg, Block):
            if seg.t <= T:
                extra.add(seg.t)
        else:
            if seg.t0 <= T:
                extra.add(seg.t0)
            extra.add(min(seg.t0 + seg.duration, T))
    times = np.unique(np.concatenate([base, np.array(sorted(extra))]))

    if checkpoints is None:
        checkpoints = (0.0, T / 4.0, T / 2.0, T)
    idx = [int(np.argmin(np.abs(times - t))) for t in checkpoints]
    t_checked = [float(times[i]) for i in idx]

    theta, y, blocks = deterministic_trajectory(spec, schedule, times)
    if schedule.kind == "acquisition":
        raise ValidationError("g_process_check covers liquidation schedules")
    a = schedule.theta_init - theta
    tiny = 1e-12 * (1.0 + T)
    blk_cum = np.zeros_like(times)
    blk_cols = []
    for t_b, y_pre, size in blocks:
        col = int(np.argmin(np.abs(times - t_b)))
        if abs(times[col] - t_b) > tiny:
            raise ValidationError(f"block time {t_b!r} off the check grid")
        blk_cum[times >= t_b - tiny] += size
        val = math.exp(-config.gamma * t_b) \
            * float(spec.F(y_pre) - spec.F(y_pre - size))
        blk_cols.append((col, val))
    a_cont = a - blk_cum
    w = np.exp(-config.gamma * times[:-1]) \
        * np.asarray(spec.f(y[:-1]), dtype=float) * np.diff(a_cont)

    v_at = np.array([
        math.exp(-config.gamma * times[i]) * value_of(float(y[i]), float(theta[i]))
        for i in idx
    ])
    g0 = config.s0 * value_of(schedule.y_init, schedule.theta_init)

    sums = np.zeros(len(idx))
    sumsq = np.zeros(len(idx))
    n_total = 0
    for _, sbar, _ in _iter_path_blocks(config, times, batch):
        l_cum = np.zeros_like(sbar)
        np.cumsum(w * sbar[:, :-1], axis=1, out=l_cum[:, 1:])
        for col, val in blk_cols:
            l_cum[:, col:] += (val * sbar[:, col])[:, None]
        for k, i in enumerate(idx):
            g = l_cum[:, i] + v_at[k] * sbar[:, i]
            sums[k] += float(np.sum(g))
            sumsq[k] += float(np.sum(g * g))
        n_total += sbar.shape[0]

    est = []
    mart_ok = True
    super_ok = True
    strictly_below = False
    max_z = 0.0
    for k, t_k in enumerate(t_checked):
        mean = sums[k] / n_total
        var = max(0.0, (sumsq[k] - n_total * mean * mean) / max(1, n_total - 1))
        se = math.sqrt(var / n_total)
        est.append(CheckpointEstimate(t=t_k, mean=mean, std_error=se))
        dev = mean - g0
        # the value stack reconstructs block-landing states to ~1e-10, so a
        # deterministic checkpoint (zero-variance, e.g. t=0) needs an
        # absolute guard above that residual; 1e-9 is far below any
        # Monte-Carlo resolution
        guard = 1e-9 * (1.0 + abs(g0))
        slack = 3.0 * se + guard
        if abs(dev) > slack:
            mart_ok = False
        if dev > slack:
            super_ok = False
        if dev < -slack:
            strictly_below = True
        if abs(dev) <= guard:
            pass
        elif se > 0.0:
            max_z = max(max_z, abs(dev) / se)
        else:
            max_z = math.inf
    return MartingaleReport(
        g0=g0, checkpoints=tuple(est), n_paths=n_total, seed=config.seed,
        martingale_consistent=mart_ok, supermartingale_consistent=super_ok,
        strictly_below=strictly_below, max_abs_z=max_z,
    )


def _shift_segments(segments, offset: float):
    out = []
    for seg in segments:
        if isinstance(seg, Block):
            out.append(Block(seg.t + offset, seg.size))
        elif isinstance(seg, Wait):
            out.append(Wait(seg.t0 + offset, seg.duration))
        elif isinstance(seg, Flow):
            out.append(Flow(seg.t0 + offset, seg.duration, seg.rate, seg.y_hold))
        elif isinstance(seg, ConstantRate):
            out.append(ConstantRate(seg.t0 + offset, seg.duration, seg.rate))
        else:
            out.append(BoundaryFollow(seg.t0 + offset, seg.duration))
    return tuple(out)


def _delayed_entry(spec, cp, fb, y, theta, delay):
    y2 = _drift(spec, y, delay)
    tail = optimal_schedule(spec, cp, fb, y2, theta)
    segs = (Wait(0.0, delay),) + _shift_segments(tail.segments, delay)
    return Schedule("liquidation", y, theta, segs,
                    delay + tail.terminal_time, spec, fb)


def _oversized_block(spec, cp, fb, y, theta, extra):
    d_opt = optimal_schedule(spec, cp, fb, y, theta).initial_block
    b = min(theta, d_opt + extra)
    if b >= theta:
        return Schedule("liquidation", y, theta, (Block(0.0, theta),), 0.0,
                        spec, fb)
    tail = optimal_schedule(spec, cp, fb, y - b, theta - b)
    segs = (Block(0.0, b),) + tail.segments
    return Schedule("liquidation", y, theta, segs, tail.terminal_time,
                    spec, fb)


def _undersized_block_pause(spec, cp, fb, y, theta, frac, pause):
    d_opt = optimal_schedule(spec, cp, fb, y, theta).initial_block
    b = frac * d_opt
    if b <= 0.0:
        return _delayed_entry(spec, cp, fb, y, theta, pause)
    y2 = _drift(spec, y - b, pause)
    tail = optimal_schedule(spec, cp, fb, y2, theta - b)
    segs = (Block(0.0, b), Wait(0.0, pause)) \
        + _shift_segments(tail.segments, pause)
    return Schedule("liquidation", y, theta, segs,
                    pause + tail.terminal_time, spec, fb)


def _twap(spec, fb, y, theta, horizon):
    return Schedule("liquidation", y, theta,
                    (ConstantRate(0.0, horizon, theta / horizon),),
                    horizon, spec, fb)


def named_suboptimal_strategies(spec: MarketSpec, cp, fb) -> dict:
    """Reference strategies that each break the optimal rule one way.

    immediate_dump sells five units at once from one unit below the curve
    (deep wait region); delayed_entry idles before the landing block;
    oversized_block overshoots into the wait region; undersized_block_pause
    lands short and pauses; twap ignores the boundary entirely.  The dump
    anchors at theta = 5, so the boundary must be solved at least that far.
    """

    if fb.theta_end < 5.0:
        raise ValidationError(
            f"named strategies need the boundary solved to theta >= 5, "
            f"got {fb.theta_end:.6g}"
        )
    y5 = fb.y_of_theta(5.0)
    return {
        "immediate_dump": Schedule("liquidation", y5 - 1.0, 5.0,
                                   (Block(0.0, 5.0),), 0.0, spec, fb),
        "delayed_entry": _delayed_entry(spec, cp, fb, 0.0, 1.0, 0.1),
        "oversized_block": _oversized_block(spec, cp, fb, 0.0, 1.0, 0.15),
        "undersized_block_pause": _undersized_block_pause(
            spec, cp, fb, 0.0, 1.0, 0.6, 0.15),
        "twap": _twap(spec, fb, 0.0, 1.0, 1.0),
    }


def standard_perturbations(spec: MarketSpec, cp, fb, y: float,
                           theta: float) -> list:
    """Twenty-one admissible deterministic variations around the optimum.

    Families: the optimal schedule itself, delayed entries, oversized and
    undersized landing blocks, uniform-rate liquidations, and a full dump.
    All sell exactly theta and stay monotone.
    """

    out = [("optimal", optimal_schedule(spec, cp, fb, y, theta))]
    for s in (0.02, 0.05, 0.1, 0.2, 0.3):
        out.append((f"delay_{s:g}", _delayed_entry(spec, cp, fb, y, theta, s)))
    for frac in (0.05, 0.1, 0.2, 0.5):
        out.append((f"oversized_{int(frac * 100)}pct",
                    _oversized_block(spec, cp, fb, y, theta, frac * theta)))
    for frac in (0.25, 0.5, 0.75):
        for pause in (0.05, 0.1):
            out.append((f"undersized_{int(frac * 100)}pct_pause_{pause:g}",
                        _undersized_block_pause(spec, cp, fb, y, theta,
                                                frac, pause)))
    for horizon in (0.25, 0.5, 1.0, 2.0):
        out.append((f"twap_{horizon:g}", _twap(spec, fb, y, theta, horizon)))
    out.append(("dump_now", Schedule("liquidation", y, theta,
                                     (Block(0.0, theta),), 0.0, spec, fb)))
    return out


@dataclass(frozen=True)
class PerturbationResult:
    name: str
    j: float
    margin: float
    admissible: bool
    reason: str


@dataclass(frozen=True)
class DominanceReport:
    j_optimal: float
    results: tuple
    min_margin: float
    all_dominated: bool
    field_gap: float

    def to_json(self) -> dict:
        return {
            "j_optimal": self.j_optimal,
            "min_margin": self.min_margin,
            "all_dominated": self.all_dominated,
            "field_gap": self.field_gap,
            "results": [
                {"name": r.name, "j": r.j, "margin": r.margin,
                 "admissible": r.admissible, "reason": r.reason}
                for r in self.results
            ],
        }


def _admissibility_reason(schedule: Schedule, y: float,
                          theta: float) -> str | None:
    if abs(schedule.y_init - y) > 1e-12 * (1.0 + abs(y)) \
            or abs(schedule.theta_init - theta) > 1e-12 * (1.0 + abs(theta)):
        return "starts from a different state"
    total = 0.0
    for seg in schedule.segments:
        if isinstance(seg, Block):
            if seg.size < 0.0:
                return f"buy block of {seg.size:.6g} in monotone mode"
            total += seg.size
        elif isinstance(seg, (Flow, ConstantRate)):
            if seg.rate < 0.0:
                return f"negative trading rate {seg.rate:.6g}"
            total += seg.rate * seg.duration
        elif isinstance(seg, BoundaryFollow):
            entry = schedule.boundary.y_of_tau(seg.duration)
            total += schedule.boundary.theta_of_y(entry)
    if total > theta * (1.0 + 1e-9) + 1e-12:
        return f"sells {total:.6g} but holds only {theta:.6g}"
    if total < theta * (1.0 - 1e-6) - 1e-12:
        return f"leaves {theta - total:.6g} unsold"
    return None


def perturbation_dominance(spec: MarketSpec, field, y: float, theta: float,
                           perturbations, config: SimConfig) -> DominanceReport:
    """Compare the optimal value against each perturbed schedule.

    Values are deterministic (analytic_J), so margins carry no Monte-Carlo
    noise; a margin below -1e-9 would contradict optimality.  Inadmissible
    entries are reported with the reason and excluded from the minimum.
    """

    config.require_positive_delta()
    delta = config.delta
    opt = optimal_schedule(spec, field.cp, field.fb, y, theta)
    j_opt = analytic_J(spec, opt, config.s0, delta)
    v_ref = config.s0 * field.v(y, theta)
    gap = abs(j_opt - v_ref) / (1.0 + abs(v_ref))

    results = []
    min_margin = math.inf
    for name, sched in perturbations:
        reason = _admissibility_reason(sched, y, theta)
        if reason is not None:
            results.append(PerturbationResult(name, math.nan, math.nan,
                                              False, reason))
            continue
        j = analytic_J(spec, sched, config.s0, delta)
        margin = j_opt - j
        min_margin = min(min_margin, margin)
        results.append(PerturbationResult(name, j, margin, True, ""))
    if not any(r.admissible for r in results):
        min_margin = math.nan
        dominated = False
    else:
        dominated = min_margin >= -1e-9
    return DominanceReport(j_optimal=j_opt, results=tuple(results),
                           min_margin=min_margin, all_dominated=dominated,
                           field_gap=gap)


@dataclass(frozen=True)
class LSModelState:
    """Optimal additive-impact (LS) strategy paths on a fixed grid.

    ``x`` holds the position paths with the final block applied at T
    (last column zero); ``e`` the volume impact; ``z`` and ``k`` the
    auxiliary forecast and drift processes of the closed-form solution.
    ``warn_dt_coarse`` flags grids coarser than T/500.
    """

    times: np.ndarray
    x: np.ndarray
    e: np.ndarray
    z: np.ndarray
    k: np.ndarray
    final_block: np.ndarray
    rho: float
    eta: float
    x_init: float
    driver: str
    warn_dt_coarse: bool


def _ls_forward(times: np.ndarray, sbar: np.ndarray, dw: np.ndarray,
                mu: float, sigma: float, rho: float, x_init: float,
                eta: float, driver: str, store: bool):
    """March the closed-form LS optimum along shared noise.

    Returns (min_price, x, e, z, k, x0); the path arrays are None unless
    ``store``.  min_price tracks min over grid times of S_t + eta E_{t-},
    the quantity whose sign defines p_T.
    """

    T = float(times[-1])
    n = len(times) - 1
    m = sbar.shape[0]
    steps = np.diff(times)
    if driver == "gbm":
        if mu == 0.0:
            raise ValidationError("LS closed form needs mu != 0")
        z0 = ((1.0 - math.exp(mu * T)) * (1.0 + rho / mu) + rho * T) * sbar[0, 0]
        zeta = (1.0 - np.exp(mu * (T - times))) * (1.0 + rho / mu) \
            + rho * (T - times)
    elif driver == "bachelier":
        z0 = mu * T + 0.5 * rho * mu * T * T
        zeta = np.zeros_like(times)
    else:
        raise ValidationError(f"unknown driver {driver!r}")
    phi = 1.0 / (2.0 + rho * (T - times))

    def core(i):
        t = times[i]
        return (x_init * (1.0 + rho * (T - t)) - 0.5 * (1.0 + rho * t) * z0) \
            / (2.0 + rho * T)

    def kprime(i):
        if driver == "gbm":
            return mu * sbar[:, i]
        return np.full(m, mu)

    I = np.zeros(m)
    K = np.zeros(m)
    Q = np.zeros(m)
    Z = np.full(m, z0)
    x_prev = core(0) + kprime(0) / (2.0 * rho)
    E = x_prev - x_init
    min_price = sbar[:, 0].copy()
    x_arr = e_arr = z_arr = k_arr = None
    if store:
        x_arr = np.empty((m, n + 1))
        e_arr = np.empty((m, n + 1))
        z_arr = np.empty((m, n + 1))
        k_arr = np.empty((m, n + 1))
        x_arr[:, 0] = x_prev
        e_arr[:, 0] = E
        z_arr[:, 0] = Z
        k_arr[:, 0] = 0.0
    x0 = x_prev.copy()

    for i in range(1, n + 1):
        dt_i = steps[i - 1]
        e_pre = E * (1.0 - rho * dt_i)
        np.minimum(min_price, sbar[:, i] + eta * e_pre, out=min_price)
        Q = Q + 0.5 * (I + K) * dt_i
        if driver == "gbm":
            dz = zeta[i - 1] * sigma * sbar[:, i - 1] * dw[:, i - 1]
            I = I + phi[i - 1] * dz
            Z = Z + dz
        K = K + kprime(i - 1) * dt_i
        if i < n:
            x_i = core(i) - 0.5 * I + kprime(i) / (2.0 * rho) - rho * Q
        else:
            x_i = np.zeros(m)
        E = e_pre + (x_i - x_prev)
        if store:
            x_arr[:, i] = x_i
            e_arr[:, i] = E
            z_arr[:, i] = Z
            k_arr[:, i] = K
        x_prev = x_i
    return min_price, x_arr, e_arr, z_arr, k_arr, x0


def ls_optimal_path(config: SimConfig, rho: float, x_init: float,
                    path: PathBundle, driver: str = "gbm",
                    eta: float = 1.0) -> LSModelState:
    """Closed-form optimal LS positions along the bundle's noise.

    Implements X_t = (x(1+rho(T-t)) - (1+rho t) Z_0/2)/(2+rho T)
    - (1/2) int phi dZ + K'_t/(2 rho) - rho int (int phi dZ + K_s)/2 ds on
    [0, T) with a closing block at T, by left-point Euler sums on the grid.
    The bachelier driver zeroes dZ and fixes K' = mu, which makes every
    path identical.
    """

    if rho <= 0.0:
        raise ValidationError(f"rho must be positive, got {rho}")
    times = np.asarray(path.times, dtype=float)
    sbar = np.atleast_2d(np.asarray(path.sbar, dtype=float))
    dw = np.atleast_2d(np.asarray(path.dw, dtype=float))
    T = float(times[-1])
    warn = bool(np.max(np.diff(times)) > T / 500.0 * (1.0 + 1e-12))
    _, x, e, z, k, _ = _ls_forward(times, sbar, dw, config.mu, config.sigma,
                                   rho, x_init, eta, driver, store=True)
    final_block = -_x_pre_terminal(times, sbar, dw, config, rho, x_init,
                                   eta, driver)
    if np.asarray(path.sbar).ndim == 1:
        x, e, z, k = x[0], e[0], z[0], k[0]
        final_block = final_block[0]
    return LSModelState(times=times, x=x, e=e, z=z, k=k,
                        final_block=final_block, rho=rho, eta=eta,
                        x_init=x_init, driver=driver, warn_dt_coarse=warn)


def _x_pre_terminal(times, sbar, dw, config, rho, x_init, eta, driver):
    """Left limit X_{T-}: the closed form evaluated at the last grid time."""

    T = float(times[-1])
    n = len(times) - 1
    mu, sigma = config.mu, config.sigma
    if driver == "gbm":
        z0 = ((1.0 - math.exp(mu * T)) * (1.0 + rho / mu) + rho * T) * sbar[0, 0]
        zeta = (1.0 - np.exp(mu * (T - times))) * (1.0 + rho / mu) \
            + rho * (T - times)
    else:
        z0 = mu * T + 0.5 * rho * mu * T * T
        zeta = np.zeros_like(times)
    phi = 1.0 / (2.0 + rho * (T - times))
    steps = np.diff(times)
    m = sbar.shape[0]
    if driver == "gbm":
        inc = phi[:-1] * zeta[:-1] * sigma * sbar[:, :-1] * dw
        I_full = np.cumsum(inc, axis=1)
        I_T = I_full[:, -1]
        K_full = np.cumsum(mu * sbar[:, :-1] * steps, axis=1)
        kp_T = mu * sbar[:, -1]
    else:
        I_full = np.zeros((m, n))
        I_T = np.zeros(m)
        K_full = np.cumsum(np.full((m, n), mu) * steps, axis=1)
        kp_T = np.full(m, mu)
    I_left = np.concatenate([np.zeros((m, 1)), I_full[:, :-1]], axis=1)
    K_left = np.concatenate([np.zeros((m, 1)), K_full[:, :-1]], axis=1)
    Q_T = np.sum(0.5 * (I_left + K_left) * steps, axis=1)
    core_T = (x_init * 1.0 - 0.5 * (1.0 + rho * T) * z0) / (2.0 + rho * T)
    return core_T - 0.5 * I_T + kp_T / (2.0 * rho) - rho * Q_T


@dataclass(frozen=True)
class ProbabilityReport:
    estimate: float
    std_error: float
    n_paths: int
    seed: int
    horizon: float
    dt: float

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "horizon": self.horizon,
            "dt": self.dt,
        }


def negative_price_probability(config: SimConfig, rho: float, x_init: float,
                               T: float, eta: float = 1.0) -> ProbabilityReport:
    """Fraction of paths where the LS execution price ever turns negative.

    Checks min over the grid of S_t + eta E_{t-} under the optimal LS
    strategy for horizon T; the grid has at least 1000 steps because the
    running minimum is sensitive to discretization.  Binomial standard
    error.
    """

    if not (T > 0.0) or not math.isfinite(T):
        raise ValidationError(f"T must be a positive real, got {T}")
    n = max(1000, int(round(T / config.dt)))
    times = np.linspace(0.0, T, n + 1)
    cfg = replace(config, horizon=T, dt=T / n)
    hits = 0
    total = 0
    for _, sbar, dw in _iter_path_blocks(cfg, times):
        min_price, *_ = _ls_forward(times, sbar, dw, cfg.mu, cfg.sigma, rho,
                                    x_init, eta, "gbm", store=False)
        hits += int(np.sum(min_price < 0.0))
        total += sbar.shape[0]
    p = hits / total
    se = math.sqrt(max(p * (1.0 - p), 0.0) / total)
    return ProbabilityReport(estimate=p, std_error=se, n_paths=total,
                             seed=cfg.seed, horizon=T, dt=T / n)


@dataclass(frozen=True)
class LSRunSummary:
    horizon: float
    times: np.ndarray
    display_x: np.ndarray
    display_sbar: np.ndarray
    frac_nonmonotone: float
    mean_variation: float
    mean_final_block_abs: float
    n_paths: int


@dataclass(frozen=True)
class ComparisonBundle:
    """Aligned mLOB and LS outputs for the matched-parameters comparison."""

    c: float
    rho: float
    x_init: float
    t_mlob: float
    mlob_schedule: Schedule
    mlob_trajectory: Trajectory
    mlob_monotone: bool
    ls_runs: tuple
    seed: int

    def to_json(self) -> dict:
        return {
            "c": self.c,
            "rho": self.rho,
            "x_init": self.x_init,
            "t_mlob": self.t_mlob,
            "mlob_initial_block": self.mlob_schedule.initial_block,
            "mlob_monotone": self.mlob_monotone,
            "seed": self.seed,
            "ls_runs": [
                {
                    "horizon": r.horizon,
                    "frac_nonmonotone": r.frac_nonmonotone,
                    "mean_variation": r.mean_variation,
                    "mean_final_block_abs": r.mean_final_block_abs,
                    "n_paths": r.n_paths,
                }
                for r in self.ls_runs
            ],
        }


def mlob_vs_ls_compare(config: SimConfig, rho: float, c: float,
                       x_init: float, ls_horizons=(1.0, 0.842),
                       n_display_paths: int = 20) -> ComparisonBundle:
    """Run both models on matched parameters and shared noise.

    mLOB side: exponential book f(y) = e^{y/c}, resilience h(y) = rho y,
    liquidation of x_init from zero impact (deterministic schedule).  LS
    side: closed-form optimal positions for each horizon, with per-path
    monotonicity and variation statistics over all config paths and a few
    stored display paths.
    """

    config.require_positive_delta()
    if c <= 0.0:
        raise ValidationError(f"book scale c must be positive, got {c}")
    spec = power_law_spec(PowerLawBook(c=c, r=1.0, beta=rho),
                          delta=config.delta)
    cp = critical_points(spec)
    fb = solve_boundary(spec, cp, theta_max=2.0 * x_init + 1.0)
    sched = optimal_schedule(spec, cp, fb, 0.0, x_init)
    t_mlob = sched.terminal_time
    traj = execute(spec, sched, dt=t_mlob / 1000.0 if t_mlob > 0 else None)
    monotone = bool(np.all(np.diff(traj.theta) <= 1e-12))

    runs = []
    for T_h in ls_horizons:
        n = max(500, int(round(T_h / config.dt)))
        times = np.linspace(0.0, T_h, n + 1)
        cfg = replace(config, horizon=T_h, dt=T_h / n)

        k = min(n_display_paths, cfg.n_paths)
        disp_cfg = replace(cfg, n_paths=k)
        disp_sbar, disp_dw = _draw_block(disp_cfg, times, 0, k)
        bundle = PathBundle(times=times, sbar=disp_sbar, dw=disp_dw,
                            seed=cfg.seed)
        disp = ls_optimal_path(cfg, rho, x_init, bundle)

        nonmono = 0
        var_sum = 0.0
        fblk_sum = 0.0
        total = 0
        for _, sbar, dw in _iter_path_blocks(cfg, times):
            _, x, _, _, _, x0 = _ls_forward(times, sbar, dw, cfg.mu,
                                            cfg.sigma, rho, x_init, 1.0,
                                            "gbm", store=True)
            interior = np.diff(x[:, :-1], axis=1)
            has_up = np.any(interior > 0.0, axis=1)
            has_dn = np.any(interior < 0.0, axis=1)
            nonmono += int(np.sum(has_up & has_dn))
            final = x[:, -1] - x[:, -2]
            var_sum += float(np.sum(np.abs(x0 - x_init))
                             + np.sum(np.abs(interior))
                             + np.sum(np.abs(final)))
            fblk_sum += float(np.sum(np.abs(final)))
            total += x.shape[0]
        runs.append(LSRunSummary(
            horizon=T_h, times=times,
            display_x=np.atleast_2d(disp.x),
            display_sbar=disp_sbar,
            frac_nonmonotone=nonmono / total,
            mean_variation=var_sum / total,
            mean_final_block_abs=fblk_sum / total,
            n_paths=total,
        ))
    return ComparisonBundle(c=c, rho=rho, x_init=x_init, t_mlob=t_mlob,
                            mlob_schedule=sched, mlob_trajectory=traj,
                            mlob_monotone=monotone, ls_runs=tuple(runs),
                            seed=config.seed)


def write_paths_csv(bundle: ComparisonBundle, run: LSRunSummary, path) -> None:
    """Aligned per-path CSV: t, path_id, sbar, y, theta, x_ls.

    The mLOB columns are the deterministic schedule sampled on the LS grid
    (post-jump at block instants, impact relaxing freely after completion),
    repeated for every path.
    """

    sched = bundle.mlob_schedule
    theta, y, _ = deterministic_trajectory(sched.spec, sched, run.times)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,path_id,sbar,y,theta,x_ls\n")
        for p in range(run.display_x.shape[0]):
            for i, t in enumerate(run.times):
                fh.write(
                    f"{t:.17g},{p},{run.display_sbar[p, i]:.17g},"
                    f"{y[i]:.17g},{theta[i]:.17g},{run.display_x[p, i]:.17g}\n"
                )
