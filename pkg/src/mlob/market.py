"""Order-book geometry and market primitives.

The unaffected price follows a geometric Brownian motion S_t.  Selling moves a
transient impact state Y with dynamics

    dY_t = -h(Y_t) dt + dTheta_t,

and the quoted price is f(Y_t) * S_t where f(y) = exp(int_0^y lambda(x) dx) is
the relative price multiplier of the order-book shape.  A block sale of size
dshifts Y from y to y - d and clears order-book volume against antiderivative
F(y) = int_0^y f(x) dx, so its proceeds are S * (F(y) - F(y - d)).

A power-law book with density q(x) = c / x^r gives

    f(y) = exp(y / c)                       for r = 1,
    f(y) = (1 + (1 - r) y / c)^(1/(1-r))    otherwise,

with lambda(y) = 1 / (c + (1 - r) y) and linear resilience h(y) = beta * y.
The impatience rate is delta = gamma - mu, the discount rate net of the price
drift; the standing assumptions require delta > 0 for the infinite-horizon
problem to be well posed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import (
    BookExhaustedError,
    BracketError,
    ConfigError,
    DomainError,
    ValidationError,
)

__all__ = [
    "MarketSpec",
    "PowerLawBook",
    "AssumptionReport",
    "power_law_spec",
    "make_market_spec",
    "check_assumptions",
    "block_trade_proceeds",
    "load_config",
    "spec_from_config",
    "MARKET_KEYS",
    "SIM_KEYS",
]


def _scalarize(fn: Callable) -> Callable:
    """Wrap an array-valued closure so scalar input returns a float."""

    def wrapped(y):
        out = fn(np.asarray(y, dtype=float))
        if np.ndim(y) == 0:
            return float(out)
        return out

    return wrapped


@dataclass(frozen=True)
class MarketSpec:
    """Market model data: resilience h, book shape f, and impatience delta.

    All callables accept floats or numpy arrays.  ``domain`` is the open
    interval of impact states on which the book is defined; evaluating f or F
    outside it raises DomainError.  ``beta`` is set when h(y) = beta * y,
    which unlocks closed-form wait times.  ``delta`` may be zero only for
    finite-horizon schedules; every infinite-horizon construction checks
    delta > 0 itself.
    """

    h: Callable
    h_prime: Callable
    h_double_prime: Callable
    lam: Callable
    lam_prime: Callable
    f: Callable
    F: Callable
    delta: float
    domain: tuple[float, float] = (-math.inf, math.inf)
    beta: float | None = None
    params: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.delta >= 0.0) or not math.isfinite(self.delta):
            raise ValidationError(f"delta must be a finite nonnegative real, got {self.delta}")
        lo, hi = self.domain
        if not (lo < 0.0 < hi):
            raise ValidationError(f"domain must contain 0, got {self.domain}")
        f0 = float(self.f(0.0))
        if abs(f0 - 1.0) > 1e-9:
            raise ValidationError(f"f(0) must equal 1, got {f0}")
        h0 = float(self.h(0.0))
        if abs(h0) > 1e-9:
            raise ValidationError(f"h(0) must equal 0, got {h0}")

    def contains(self, y) -> bool:
        lo, hi = self.domain
        return bool(np.all((np.asarray(y) > lo) & (np.asarray(y) < hi)))

    def require_in_domain(self, y, what: str = "y") -> None:
        if not self.contains(y):
            lo, hi = self.domain
            raise DomainError(
                f"{what} outside order-book support ({lo:.6g}, {hi:.6g})"
            )


@dataclass(frozen=True)
class PowerLawBook:
    """Power-law order-book density q(x) = c / x^r with resilience slope beta."""

    c: float
    r: float
    beta: float

    def __post_init__(self):
        if not (self.c > 0.0):
            raise ValidationError(f"book depth c must be positive, got {self.c}")
        if not (self.r >= 0.0):
            raise ValidationError(f"shape exponent r must be nonnegative, got {self.r}")
        if not (self.beta > 0.0):
            raise ValidationError(f"resilience beta must be positive, got {self.beta}")


def power_law_spec(book: PowerLawBook, delta: float) -> MarketSpec:
    """Build the MarketSpec of a power-law book with linear resilience.

    Requires r < 1 + beta / (beta + delta); beyond that the sell-region
    critical points cease to exist.  ``delta = 0`` is accepted so the spec can
    drive finite-horizon schedules, but the r-range check then reduces to
    r < 2 and all infinite-horizon operations will refuse the spec.
    """

    if not (delta >= 0.0) or not math.isfinite(delta):
        raise ValidationError(f"delta must be a finite nonnegative real, got {delta}")
    c, r, beta = book.c, book.r, book.beta
    r_max = 1.0 + beta / (beta + delta)
    if not (r < r_max):
        raise ValidationError(
            f"shape exponent r={r} out of admissible range [0, {r_max}) "
            f"for beta={beta}, delta={delta}"
        )

    if r == 1.0:
        domain = (-math.inf, math.inf)

        def _f(y):
            return np.exp(y / c)

        def _F(y):
            return c * np.expm1(y / c)

        def _lam(y):
            return np.full_like(np.asarray(y, dtype=float), 1.0 / c)

        def _lam_prime(y):
            return np.zeros_like(np.asarray(y, dtype=float))

    else:
        s = 1.0 - r
        edge = -c / s
        domain = (edge, math.inf) if s > 0 else (-math.inf, edge)
        p = 1.0 / s
        pf = (2.0 - r) / s

        def _support(y):
            a = c + s * y
            if np.any(a <= 0.0):
                raise DomainError(
                    f"impact state outside order-book support "
                    f"({domain[0]:.6g}, {domain[1]:.6g})"
                )
            return a

        def _f(y):
            return (_support(y) / c) ** p

        def _F(y):
            return c / (2.0 - r) * ((_support(y) / c) ** pf - 1.0)

        def _lam(y):
            return 1.0 / _support(y)

        def _lam_prime(y):
            return -s / _support(y) ** 2

    def _h(y):
        return beta * np.asarray(y, dtype=float)

    def _h_prime(y):
        return np.full_like(np.asarray(y, dtype=float), beta)

    def _h_double_prime(y):
        return np.zeros_like(np.asarray(y, dtype=float))

    return MarketSpec(
        h=_scalarize(_h),
        h_prime=_scalarize(_h_prime),
        h_double_prime=_scalarize(_h_double_prime),
        lam=_scalarize(_lam),
        lam_prime=_scalarize(_lam_prime),
        f=_scalarize(_f),
        F=_scalarize(_F),
        delta=float(delta),
        domain=domain,
        beta=beta,
        params={"kind": "power_law", "c": c, "r": r, "beta": beta, "delta": float(delta)},
    )


def _fd_step(y: float) -> float:
    return 1e-6 * max(1.0, abs(y))


def _fd1(fn: Callable, y: float) -> float:
    s = _fd_step(y)
    return (fn(y + s) - fn(y - s)) / (2.0 * s)


def _fd2(fn: Callable, y: float) -> float:
    s = _fd_step(y)
    return (fn(y + s) - 2.0 * fn(y) + fn(y - s)) / (s * s)


def make_market_spec(
    h: Callable,
    f: Callable,
    delta: float,
    domain: tuple[float, float] = (-math.inf, math.inf),
    h_prime: Callable | None = None,
    h_double_prime: Callable | None = None,
    lam: Callable | None = None,
    lam_prime: Callable | None = None,
    F: Callable | None = None,
    beta: float | None = None,
) -> MarketSpec:
    """Assemble a MarketSpec from user callables, filling gaps numerically.

    Missing derivatives use central finite differences with step
    1e-6 * max(1, |y|); a missing F integrates f from 0 by adaptive
    quadrature on every call, which is accurate but slow in hot loops.
    """

    hp = h_prime or (lambda y: _fd1(h, y))
    hpp = h_double_prime or (lambda y: _fd2(h, y))
    lm = lam or (lambda y: _fd1(f, y) / f(y))
    lmp = lam_prime or (lambda y: _fd1(lm, y))

    if F is None:

        def F_quad(y):
            arr = np.asarray(y, dtype=float)
            if arr.ndim == 0:
                return quad(f, 0.0, float(arr), epsabs=1e-12, epsrel=1e-12, limit=200)[0]
            return np.array([F_quad(v) for v in arr.ravel()]).reshape(arr.shape)

        F = F_quad

    return MarketSpec(
        h=h, h_prime=hp, h_double_prime=hpp, lam=lm, lam_prime=lmp,
        f=f, F=F, delta=float(delta), domain=domain, beta=beta,
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of sampling-based validation of the standing assumptions."""

    conditions: dict[str, bool]
    y0_bracket: tuple[float, float] | None
    y_inf_bracket: tuple[float, float] | None
    interval: tuple[float, float]
    n_samples: int

    @property
    def valid(self) -> bool:
        return all(self.conditions.values())

    def failed(self) -> list[str]:
        return [name for name, ok in self.conditions.items() if not ok]


def _default_scan_interval(spec: MarketSpec) -> tuple[float, float]:
    """Expand leftward from 0 until h*lambda + h' + delta changes sign."""

    lo_dom, _ = spec.domain
    if math.isfinite(lo_dom):
        lo = lo_dom + 1e-9 * (1.0 + abs(lo_dom))
        return (lo, 0.0)
    a2 = lambda y: spec.h(y) * spec.lam(y) + spec.h_prime(y) + spec.delta
    lo = -1.0
    for _ in range(60):
        try:
            if a2(lo) < 0.0:
                return (lo, 0.0)
        except DomainError:
            break
        lo *= 2.0
    raise BracketError(
        "roots not bracketed: y_inf shows no sign change of "
        "h*lambda + h' + delta on the scanned interval"
    )


def _bracket_from_samples(ys: np.ndarray, vals: np.ndarray) -> tuple[float, float] | None:
    sign = np.sign(vals)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if flips.size == 0:
        exact = np.nonzero(sign == 0)[0]
        if exact.size:
            i = int(exact[0])
            return (float(ys[max(i - 1, 0)]), float(ys[min(i + 1, len(ys) - 1)]))
        return None
    i = int(flips[0])
    return (float(ys[i]), float(ys[i + 1]))


def check_assumptions(
    spec: MarketSpec,
    search_interval: tuple[float, float] | None = None,
    n_samples: int = 10_000,
) -> AssumptionReport:
    """Validate the standing assumptions by dense sampling.

    Checks delta > 0, f(0) = 1, f strictly increasing, lambda > 0, h(0) = 0,
    h' > 0, h'' >= 0, (h lambda)' > 0, and that the critical points y_0
    (root of h lambda + delta) and y_inf (root of h lambda + h' + delta) are
    bracketed in the search interval.  When no interval is given, one is
    grown leftward from 0 automatically.

    Raises BracketError naming the missing root if every analytic condition
    holds yet a root is not bracketed, since that points at a fixable search
    interval rather than a broken spec.
    """

    explicit = search_interval is not None
    if search_interval is None:
        search_interval = _default_scan_interval(spec)
    lo, hi = search_interval
    if not (lo < hi):
        raise ValidationError(f"empty search interval {search_interval}")
    spec.require_in_domain(lo, "search interval low end")

    ys = np.linspace(lo, hi, n_samples)
    # include a symmetric positive stretch so monotonicity is probed both sides
    hi_pos = min(abs(lo), spec.domain[1] - 1e-9 * (1.0 + abs(spec.domain[1]))) \
        if math.isfinite(spec.domain[1]) else abs(lo)
    sample = np.unique(np.concatenate([ys, np.linspace(0.0, hi_pos, n_samples // 4)]))

    fv = np.asarray(spec.f(sample), dtype=float)
    lamv = np.asarray(spec.lam(sample), dtype=float)
    hpv = np.asarray(spec.h_prime(sample), dtype=float)
    hppv = np.asarray(spec.h_double_prime(sample), dtype=float)
    hl = np.asarray(spec.h(sample), dtype=float) * lamv

    a1 = np.asarray(spec.h(ys), dtype=float) * np.asarray(spec.lam(ys), dtype=float) + spec.delta
    a2 = a1 + np.asarray(spec.h_prime(ys), dtype=float)

    conditions = {
        "delta_positive": spec.delta > 0.0,
        "f_unit_at_zero": abs(float(spec.f(0.0)) - 1.0) <= 1e-9,
        "f_increasing": bool(np.all(np.diff(fv) > 0.0)),
        "lambda_positive": bool(np.all(lamv > 0.0)),
        "h_zero_at_zero": abs(float(spec.h(0.0))) <= 1e-9,
        "h_prime_positive": bool(np.all(hpv > 0.0)),
        "h_convex": bool(np.all(hppv >= -1e-9)),
        "impact_decay_increasing": bool(np.all(np.diff(hl) > 0.0)),
    }

    y0_bracket = _bracket_from_samples(ys, a1)
    y_inf_bracket = _bracket_from_samples(ys, a2)
    conditions["y0_bracketed"] = y0_bracket is not None
    conditions["y_inf_bracketed"] = y_inf_bracket is not None

    analytic_ok = all(
        conditions[k]
        for k in conditions
        if k not in ("y0_bracketed", "y_inf_bracketed")
    )
    if analytic_ok:
        missing = [
            name
            for name, br in (("y0", y0_bracket), ("y_inf", y_inf_bracket))
            if br is None
        ]
        if missing and explicit:
            raise BracketError(
                f"roots not bracketed: {', '.join(missing)} shows no sign change "
                f"on [{lo:.6g}, {hi:.6g}]; widen the search interval"
            )

    return AssumptionReport(
        conditions=conditions,
        y0_bracket=y0_bracket,
        y_inf_bracket=y_inf_bracket,
        interval=(float(lo), float(hi)),
        n_samples=n_samples,
    )


def block_trade_proceeds(spec: MarketSpec, y_pre: float, d_theta: float):
    """Nominal proceeds F(y_pre) - F(y_pre - d_theta) of a block of size d_theta.

    Positive d_theta is a sale, negative a purchase (negative proceeds, i.e. a
    cost).  Raises BookExhaustedError when either endpoint leaves the book's
    support.
    """

    y_post = np.asarray(y_pre, dtype=float) - np.asarray(d_theta, dtype=float)
    lo, hi = spec.domain
    for label, val in (("pre-trade state", y_pre), ("post-trade state", y_post)):
        if not spec.contains(val):
            raise BookExhaustedError(
                f"order book exhausted: {label} {np.min(val):.6g}..{np.max(val):.6g} "
                f"outside support ({lo:.6g}, {hi:.6g})"
            )
    out = spec.F(y_pre) - spec.F(y_post)
    if np.ndim(y_pre) == 0 and np.ndim(d_theta) == 0:
        return float(out)
    return out


MARKET_KEYS = ("kind", "c", "r", "beta", "delta")
SIM_KEYS = ("mu", "sigma", "gamma", "s0", "horizon", "dt", "n_paths", "seed",
            "rho", "x_init", "y0", "theta0", "eta")


def load_config(path) -> dict:
    """Parse a flat key=value config file.

    Lines are ``key = value`` with ``#`` comments; values are decoded as int,
    then float, else kept as strings.  Unknown keys raise ConfigError.
    """

    known = set(MARKET_KEYS) | set(SIM_KEYS)
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            if key == "kind":
                out[key] = value
                continue
            try:
                out[key] = int(value)
            except ValueError:
                try:
                    out[key] = float(value)
                except ValueError:
                    raise ConfigError(
                        f"{path}:{lineno}: could not parse numeric value {value!r}"
                    ) from None
    return out


def spec_from_config(cfg: dict) -> MarketSpec:
    """Build a MarketSpec from a parsed config mapping.

    Needs kind=power_law with c, r, beta and either delta or both gamma and
    mu (then delta = gamma - mu); giving both ways must agree to 1e-12.
    """

    kind = cfg.get("kind", "power_law")
    if kind != "power_law":
        raise ConfigError(f"unknown market kind {kind!r}; only power_law is built in")
    missing = [k for k in ("c", "r", "beta") if k not in cfg]
    if missing:
        raise ConfigError(f"config missing required keys: {', '.join(missing)}")
    delta = cfg.get("delta")
    if "gamma" in cfg and "mu" in cfg:
        d2 = float(cfg["gamma"]) - float(cfg["mu"])
        if delta is None:
            delta = d2
        elif abs(float(delta) - d2) > 1e-12:
            raise ValidationError(
                f"delta={delta} inconsistent with gamma - mu = {d2}"
            )
    if delta is None:
        raise ConfigError("config missing delta (or gamma and mu)")
    book = PowerLawBook(c=float(cfg["c"]), r=float(cfg["r"]), beta=float(cfg["beta"]))
    return power_law_spec(book, float(delta))
