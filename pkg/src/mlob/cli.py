"""Command-line front end: every workflow as a subcommand, plot-ready files out.

Each file-producing subcommand writes its artifacts plus a manifest
(``<subcommand>-manifest.json``) holding the fully resolved configuration,
the seed, and the output list.  ``mlob replay <manifest>`` reruns the
recorded subcommand and reports whether the regenerated files are
hash-identical.  Exit codes: 0 success, 1 domain or validation failure,
2 usage or config error, 3 verification failure.
"""

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .boundary import (acquisition_boundary, boundary_ode_rhs,
                       critical_points, solve_boundary, ybar_prime)
from .errors import ConfigError, MlobError
from .market import block_trade_proceeds, check_assumptions, load_config, \
    spec_from_config
from .schedule import (Block, Schedule, acquisition_schedule, execute,
                       optimal_schedule, optimal_schedule_two_sided,
                       type_a_schedule, write_schedule_json)
from .simulate import (SimConfig, analytic_J, g_process_check,
                       mlob_vs_ls_compare, negative_price_probability,
                       perturbation_dominance, standard_perturbations,
                       write_paths_csv)
from .value import (ValueField, check_appendix_identity,
                    check_variational_inequalities, dump_value_grid,
                    v_bdry_integral)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _resolve_seed(args, cfg: dict) -> int:
    """Seed precedence: --seed, then MLOB_SEED, then the config key, then 0."""

    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("MLOB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MLOB_SEED must be an integer, got {env!r}") \
                from None
    if "seed" in cfg:
        return int(cfg["seed"])
    return 0


def _market_opts(cfg: dict) -> dict:
    out = {"kind": cfg.get("kind", "power_law")}
    for key in ("c", "r", "beta"):
        if key in cfg:
            out[key] = float(cfg[key])
    spec = spec_from_config(cfg)
    out["delta"] = spec.delta
    return out


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out_dir: str, subcommand: str, opts: dict,
                    outputs: list) -> str:
    name = f"{subcommand}-manifest.json"
    _write_json(os.path.join(out_dir, name), {
        "manifest_version": 1,
        "tool_version": __version__,
        "subcommand": subcommand,
        "seed": opts.get("seed"),
        "config": opts,
        "outputs": sorted(outputs),
    })
    return name


def _spec_of(opts: dict):
    return spec_from_config({k: v for k, v in opts.items()
                             if k in ("kind", "c", "r", "beta", "delta")})


# -- subcommand runners ------------------------------------------------------
# Runners take a fully resolved option dict so `replay` can rerun them from
# a manifest alone.  They return the list of files written.


def run_boundary(opts: dict, out_dir: str) -> list:
    spec = _spec_of(opts)
    if opts["mode"] == "acquisition":
        curve = acquisition_boundary(spec, opts["eta"], opts["theta_max"])
    else:
        curve = solve_boundary(spec, critical_points(spec),
                               opts["theta_max"])
    if opts["format"] == "csv":
        name = "boundary.csv"
        curve.to_csv(os.path.join(out_dir, name))
    else:
        name = "boundary.json"
        _write_json(os.path.join(out_dir, name), {
            "mode": opts["mode"],
            "columns": ["y", "theta", "tau"],
            "points": [list(map(float, row)) for row in curve.points],
        })
    return [name]


def run_value(opts: dict, out_dir: str) -> list:
    spec = _spec_of(opts)
    cp = critical_points(spec)
    fb = solve_boundary(spec, cp, opts["theta_max"])
    field = ValueField(spec, cp, fb)
    two = opts["mode"] == "two-sided"
    y, theta = opts["y0"], opts["theta0"]
    ev = field.v_two_sided_partials(y, theta) if two \
        else field.v_partials(y, theta)
    payload = {
        "mode": opts["mode"],
        "y": ev.y, "theta": ev.theta,
        "region": ev.region.value,
        "block_to_boundary": ev.delta,
        "V": ev.V, "V_y": ev.V_y, "V_theta": ev.V_theta,
        "y0": cp.y0, "y_inf": cp.y_inf,
    }
    names = ["value.json"]
    _write_json(os.path.join(out_dir, "value.json"), payload)
    if opts["grid"] > 0:
        n = opts["grid"]
        theta_g = min(0.8 * fb.theta_end, max(2.0 * theta, 1.0))
        ys = np.linspace(fb.y_of_theta(theta_g), cp.y0 + 1.0, n)
        thetas = np.linspace(0.0, theta_g, n)
        dump_value_grid(field, ys, thetas,
                        os.path.join(out_dir, "value_grid.csv"),
                        two_sided=two)
        names.append("value_grid.csv")
    return names


def run_schedule(opts: dict, out_dir: str) -> list:
    spec = _spec_of(opts)
    y, theta = opts["y0"], opts["theta0"]
    mode = opts["mode"]
    if mode == "acquisition":
        ab = acquisition_boundary(spec, opts["eta"], opts["theta_max"])
        sched = acquisition_schedule(spec, ab, y, theta)
    elif mode == "type-a":
        sched = type_a_schedule(spec, opts["horizon"], y, theta)
    else:
        cp = critical_points(spec)
        fb = solve_boundary(spec, cp, opts["theta_max"])
        build = optimal_schedule_two_sided if mode == "two-sided" \
            else optimal_schedule
        sched = build(spec, cp, fb, y, theta)
    dt = sched.terminal_time / 1000.0 if sched.terminal_time > 0 else None
    if opts["format"] == "csv":
        name = "trajectory.csv"
        execute(spec, sched, dt=dt).to_csv(os.path.join(out_dir, name))
    else:
        name = "schedule.json"
        write_schedule_json(spec, sched, os.path.join(out_dir, name), dt=dt)
    return [name]


def _sim_config(opts: dict) -> SimConfig:
    return SimConfig(mu=opts["mu"], sigma=opts["sigma"], gamma=opts["gamma"],
                     s0=opts["s0"], horizon=opts["horizon"], dt=opts["dt"],
                     n_paths=opts["n_paths"], seed=opts["seed"])


def run_simulate(opts: dict, out_dir: str) -> list:
    spec = _spec_of(opts)
    cp = critical_points(spec)
    fb = solve_boundary(spec, cp, opts["theta_max"])
    field = ValueField(spec, cp, fb)
    config = _sim_config(opts)
    two = opts["mode"] == "two-sided"
    y, theta = opts["y0"], opts["theta0"]
    build = optimal_schedule_two_sided if two else optimal_schedule
    sched = build(spec, cp, fb, y, theta)
    mart = g_process_check(spec, field, sched, config, two_sided=two)
    dom = perturbation_dominance(
        spec, field, y, theta, standard_perturbations(spec, cp, fb, y, theta),
        config)
    _write_json(os.path.join(out_dir, "martingale.json"), mart.to_json())
    _write_json(os.path.join(out_dir, "dominance.json"), dom.to_json())
    return ["martingale.json", "dominance.json"]


def run_compare_ls(opts: dict, out_dir: str) -> list:
    config = _sim_config(opts)
    bundle = mlob_vs_ls_compare(config, opts["rho"], opts["c"],
                                opts["x_init"])
    payload = bundle.to_json()
    payload["p_T"] = {}
    for run in bundle.ls_runs:
        rep = negative_price_probability(config, opts["rho"], opts["x_init"],
                                         run.horizon, eta=opts["eta"])
        payload["p_T"][f"{run.horizon:g}"] = rep.to_json()
    names = ["compare_ls.json"]
    _write_json(os.path.join(out_dir, "compare_ls.json"), payload)
    for run in bundle.ls_runs:
        name = f"paths_T{run.horizon:g}.csv"
        write_paths_csv(bundle, run, os.path.join(out_dir, name))
        names.append(name)
    return names


def _verify_checks(opts: dict):
    """Run the invariant suite; yields (name, passed, detail) triples."""

    spec = _spec_of(opts)
    checks = []

    def add(name, passed, detail=""):
        checks.append({"name": name, "passed": bool(passed),
                       "detail": detail})

    rep = check_assumptions(spec)
    add("assumptions", rep.valid,
        "all conditions hold" if rep.valid else
        "violated: " + ", ".join(rep.failed()))
    if not rep.valid:
        return checks

    cp = critical_points(spec)
    c, r, beta = opts["c"], opts["r"], opts["beta"]
    d = spec.delta
    y0_cf = -c * d / (beta + (1.0 - r) * d)
    yinf_cf = -c * (beta + d) / (beta + (1.0 - r) * (beta + d))
    err = max(abs(cp.y0 - y0_cf), abs(cp.y_inf - yinf_cf))
    add("critical_points_closed_form", err < 1e-9, f"max err {err:.3e}")

    fb = solve_boundary(spec, cp, opts["theta_max"])
    field = ValueField(spec, cp, fb)
    theta_g = min(0.8 * fb.theta_end, 10.0)

    add("boundary_foot", abs(fb.theta_of_y(cp.y0)) < 1e-10
        and fb.points[0, 1] == 0.0,
        f"theta(y0) = {fb.theta_of_y(cp.y0):.3e}")

    tau_hi = fb.tau_of_y(fb.y_of_theta(theta_g))
    taus = np.linspace(0.0, tau_hi, 30)
    rt = max(abs(fb.tau_of_y(fb.y_of_tau(t)) - t) for t in taus)
    add("ttl_roundtrip", rt < 1e-8, f"max |tau(y(tau)) - tau| = {rt:.3e}")

    ys = np.linspace(fb.y_of_theta(0.9 * theta_g), cp.y0, 17)[1:-1]
    worst = 0.0
    for y in ys:
        h = 1e-5 * (1.0 + abs(y))
        fd = (fb.theta_of_y(y + h) - fb.theta_of_y(y - h)) / (2.0 * h)
        rhs = boundary_ode_rhs(spec, y)
        worst = max(worst, abs(fd - rhs) / (1.0 + abs(rhs)))
    add("boundary_ode_residual", worst < 2e-4, f"max rel {worst:.3e}")

    worst = 0.0
    for t in np.linspace(0.1 * tau_hi, 0.9 * tau_hi, 9):
        h = 1e-6 * (1.0 + t)
        fd = (fb.y_of_tau(t + h) - fb.y_of_tau(t - h)) / (2.0 * h)
        val = ybar_prime(spec, cp, fb.y_of_tau(t))
        worst = max(worst, abs(fd - val) / (1.0 + abs(val)))
    add("curve_speed_closed_form", worst < 1e-4, f"max rel {worst:.3e}")

    worst = 0.0
    for theta in (0.35 * theta_g, 0.7 * theta_g):
        ref = field.v_bdry(theta)
        worst = max(worst, abs(v_bdry_integral(field, theta) - ref)
                    / (1.0 + abs(ref)))
    add("v_bdry_integral_repr", worst < 1e-6, f"max rel {worst:.3e}")

    worst = max(check_appendix_identity(field, theta)
                for theta in (0.4 * theta_g, 0.8 * theta_g))
    add("flux_identity", worst < 1e-7, f"max residual {worst:.3e}")

    # relative gaps: V_y = f(y) grows exponentially along the sell-all line,
    # and the straddle picks up h * V_yy of truncation on a C1 (not C2) fit
    worst = 0.0
    for theta in np.linspace(0.3 * theta_g, 0.9 * theta_g, 7):
        for line in (fb.y_of_theta(theta), cp.y0 + theta):
            h = 1e-7 * (1.0 + abs(line))
            lo = field.v_partials(line - h, theta)
            hi = field.v_partials(line + h, theta)
            worst = max(worst,
                        abs(lo.V_y - hi.V_y) / (1.0 + abs(hi.V_y)),
                        abs(lo.V_theta - hi.V_theta)
                        / (1.0 + abs(hi.V_theta)))
    add("c1_pasting", worst < 5e-5, f"max relative partial gap {worst:.3e}")

    n = opts["grid"]
    theta_vi = min(theta_g, 0.8 * fb.theta_end)
    grid = (np.linspace(fb.y_of_theta(theta_vi), cp.y0 + 1.0, n),
            np.linspace(0.0, theta_vi, n))
    for two in (False, True):
        vi = check_variational_inequalities(field, grid, two_sided=two)
        label = "vi_two_sided" if two else "vi_monotone"
        add(label, vi.passed,
            f"{vi.n_points} points" if vi.passed else "; ".join(vi.failures))

    states = [
        (0.6 * theta_g, fb.y_of_theta(0.6 * theta_g)),
        (0.5 * theta_g,
         0.5 * (fb.y_of_theta(0.5 * theta_g) + cp.y0)),
        (0.5 * theta_g,
         0.5 * (fb.y_of_theta(0.5 * theta_g) + fb.y_of_theta(theta_g))),
        (0.4 * theta_g, cp.y0 + 0.4 * theta_g + 0.1),
    ]
    worst = 0.0
    for theta, y in states:
        sched = optimal_schedule(spec, cp, fb, y, theta)
        j = analytic_J(spec, sched, 1.0, d)
        v = field.v(y, theta)
        worst = max(worst, abs(j - v) / (1.0 + abs(v)))
    add("analytic_j_vs_value", worst < 1e-6, f"max rel {worst:.3e}")

    y_pre = cp.y0 + 0.4
    size = 0.8 * min(1.0, theta_g)
    whole = block_trade_proceeds(spec, y_pre, size)
    parts = sum(block_trade_proceeds(spec, y_pre - k * size / 4.0, size / 4.0)
                for k in range(4))
    err = abs(whole - parts) / (1.0 + abs(whole))
    add("block_splitting_exact", err < 1e-12, f"rel gap {err:.3e}")

    mu = 0.0
    config = SimConfig(mu=mu, sigma=0.25, gamma=mu + d, s0=1.0, horizon=1.0,
                       dt=1e-2, n_paths=opts["n_paths"], seed=opts["seed"])
    sched = optimal_schedule(spec, cp, fb, opts["y0"], opts["theta0"])
    mart = g_process_check(spec, field, sched, config)
    add("martingale_optimal", mart.martingale_consistent,
        f"max |z| = {mart.max_abs_z:.2f} over {mart.n_paths} paths")

    theta_d = min(5.0, 0.8 * fb.theta_end)
    lo_dom = spec.domain[0]
    if math.isfinite(lo_dom):
        # a block cannot push the impact state past the book's support
        while theta_d > 1e-3 \
                and fb.y_of_theta(theta_d) - theta_d - lo_dom <= 0.1 * theta_d:
            theta_d *= 0.5
    y_curve = fb.y_of_theta(theta_d)
    y_dump = y_curve - 1.0
    if math.isfinite(lo_dom):
        floor = lo_dom + theta_d + 1e-3 * (1.0 + theta_d)
        if y_dump <= floor:
            y_dump = 0.5 * (y_curve + floor)
    dump = Schedule("liquidation", y_dump, theta_d,
                    (Block(0.0, theta_d),), 0.0, spec, fb)
    rep = g_process_check(spec, field, dump, config)
    add("supermartingale_dump", rep.supermartingale_consistent
        and rep.strictly_below,
        f"deep-wait dump from y = {y_dump:.4g}")

    return checks


def run_verify(opts: dict, out_dir: str) -> list:
    checks = _verify_checks(opts)
    _write_json(os.path.join(out_dir, "verify.json"), {
        "all_passed": all(c["passed"] for c in checks),
        "checks": checks,
    })
    return ["verify.json"]


_RUNNERS = {
    "boundary": run_boundary,
    "value": run_value,
    "schedule": run_schedule,
    "simulate": run_simulate,
    "compare-ls": run_compare_ls,
    "verify": run_verify,
}


# -- option resolution -------------------------------------------------------


def _resolve_theta_max(args, theta0: float) -> float:
    if args.theta_max is not None:
        return float(args.theta_max)
    return max(10.0, 2.0 * theta0 + 1.0)


def _require(cfg: dict, key: str, why: str):
    if key not in cfg:
        raise ConfigError(f"config is missing {key!r} ({why})")
    return cfg[key]


def _opts_boundary(args, cfg: dict) -> dict:
    opts = _market_opts(cfg)
    opts["mode"] = args.mode
    opts["theta_max"] = float(args.theta_max) if args.theta_max is not None \
        else 10.0
    opts["format"] = args.format or "csv"
    if args.mode == "acquisition":
        opts["eta"] = float(_require(cfg, "eta",
                                     "acquisition boundary height scale"))
    return opts


def _opts_value(args, cfg: dict) -> dict:
    opts = _market_opts(cfg)
    opts.update(y0=float(args.y0), theta0=float(args.theta0),
                mode=args.mode, grid=int(args.grid or 0),
                theta_max=_resolve_theta_max(args, float(args.theta0)),
                format="json")
    return opts


def _opts_schedule(args, cfg: dict) -> dict:
    opts = _market_opts(cfg)
    opts.update(y0=float(args.y0), theta0=float(args.theta0),
                mode=args.mode,
                theta_max=_resolve_theta_max(args, float(args.theta0)),
                format=args.format or "json")
    if args.mode == "acquisition":
        opts["eta"] = float(_require(cfg, "eta",
                                     "acquisition boundary height scale"))
    if args.mode == "type-a":
        opts["horizon"] = float(_require(cfg, "horizon",
                                         "type-a schedules are finite-horizon"))
    return opts


def _resolve_dynamics(cfg: dict, spec, mu_default: float,
                      sigma_default: float) -> tuple:
    """(mu, sigma, gamma) consistent with the market's delta = gamma - mu."""

    mu = float(cfg.get("mu", mu_default))
    sigma = float(cfg.get("sigma", sigma_default))
    gamma = float(cfg["gamma"]) if "gamma" in cfg else mu + spec.delta
    if abs((gamma - mu) - spec.delta) > 1e-9:
        raise ConfigError(
            f"gamma - mu = {gamma - mu} does not match the market's "
            f"delta = {spec.delta}"
        )
    return mu, sigma, gamma


def _opts_simulate(args, cfg: dict) -> dict:
    opts = _market_opts(cfg)
    spec = _spec_of(opts)
    mu, sigma, gamma = _resolve_dynamics(cfg, spec, 0.0, 0.25)
    horizon = float(cfg.get("horizon", 1.0))
    opts.update(
        y0=float(args.y0), theta0=float(args.theta0), mode=args.mode,
        theta_max=_resolve_theta_max(args, float(args.theta0)),
        mu=mu, sigma=sigma, gamma=gamma,
        s0=float(cfg.get("s0", 1.0)), horizon=horizon,
        dt=float(cfg.get("dt", 1e-2 * horizon)),
        n_paths=int(args.paths) if args.paths is not None
        else int(cfg.get("n_paths", 2000)),
        seed=_resolve_seed(args, cfg),
    )
    return opts


def _opts_compare_ls(args, cfg: dict) -> dict:
    opts = _market_opts(cfg)
    if opts.get("r", 1.0) != 1.0:
        raise ConfigError(
            "compare-ls matches the models through an exponential book; "
            f"config must have r = 1, got r = {opts.get('r')}"
        )
    spec = _spec_of(opts)
    mu, sigma, gamma = _resolve_dynamics(cfg, spec, -0.5, 1.0)
    c = float(_require(cfg, "c", "book depth"))
    beta = float(cfg.get("beta", 1.0))
    rho = float(cfg.get("rho", beta))
    if abs(rho - beta) > 1e-12:
        raise ConfigError(
            f"matched parameters need h(y) = rho y, so rho ({rho}) must "
            f"equal beta ({beta})"
        )
    s0 = float(cfg.get("s0", 1.0))
    horizon = float(cfg.get("horizon", 1.0))
    opts.update(
        mu=mu, sigma=sigma, gamma=gamma, s0=s0, horizon=horizon,
        dt=float(cfg.get("dt", 1e-3 * horizon)),
        n_paths=int(args.paths) if args.paths is not None
        else int(cfg.get("n_paths", 20_000)),
        seed=_resolve_seed(args, cfg),
        rho=rho, x_init=float(cfg.get("x_init", 1.0)),
        eta=float(cfg.get("eta", s0 / c)),
    )
    return opts


def _opts_verify(args, cfg: dict) -> dict:
    opts = _market_opts(cfg)
    opts.update(
        y0=float(args.y0), theta0=float(args.theta0),
        theta_max=_resolve_theta_max(args, float(args.theta0)),
        grid=int(args.grid or 60),
        n_paths=int(args.paths) if args.paths is not None else 2000,
        seed=_resolve_seed(args, cfg),
    )
    return opts


# -- handlers ----------------------------------------------------------------


def _run_and_manifest(subcommand: str, opts: dict, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    names = _RUNNERS[subcommand](opts, out_dir)
    names.append(_write_manifest(out_dir, subcommand, opts, names))
    for name in names:
        print(f"wrote {os.path.join(out_dir, name)}")
    return names


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    spec = spec_from_config(cfg)
    rep = check_assumptions(spec)
    for name, passed in rep.conditions.items():
        print(f"{'ok  ' if passed else 'FAIL'} {name}")
    if rep.valid:
        print("spec satisfies the standing assumptions")
        return 0
    print("violated: " + ", ".join(rep.failed()), file=sys.stderr)
    return 1


def cmd_boundary(args) -> int:
    _run_and_manifest("boundary", _opts_boundary(args, load_config(args.config)),
                      args.out_dir)
    return 0


def cmd_value(args) -> int:
    _run_and_manifest("value", _opts_value(args, load_config(args.config)),
                      args.out_dir)
    return 0


def cmd_schedule(args) -> int:
    _run_and_manifest("schedule", _opts_schedule(args, load_config(args.config)),
                      args.out_dir)
    return 0


def cmd_simulate(args) -> int:
    _run_and_manifest("simulate", _opts_simulate(args, load_config(args.config)),
                      args.out_dir)
    return 0


def cmd_compare_ls(args) -> int:
    _run_and_manifest("compare-ls",
                      _opts_compare_ls(args, load_config(args.config)),
                      args.out_dir)
    return 0


def cmd_verify(args) -> int:
    opts = _opts_verify(args, load_config(args.config))
    os.makedirs(args.out_dir, exist_ok=True)
    names = _RUNNERS["verify"](opts, args.out_dir)
    names.append(_write_manifest(args.out_dir, "verify", opts, names))
    with open(os.path.join(args.out_dir, "verify.json"),
              encoding="utf-8") as fh:
        report = json.load(fh)
    for check in report["checks"]:
        flag = "ok  " if check["passed"] else "FAIL"
        print(f"{flag} {check['name']}: {check['detail']}")
    for name in names:
        print(f"wrote {os.path.join(args.out_dir, name)}")
    if report["all_passed"]:
        return 0
    print("verification failed", file=sys.stderr)
    return 3


def cmd_replay(args) -> int:
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            man = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") \
            from None
    if man.get("manifest_version") != 1:
        raise ConfigError(
            f"unsupported manifest_version {man.get('manifest_version')!r}")
    sub = man.get("subcommand")
    if sub not in _RUNNERS:
        raise ConfigError(f"manifest names unknown subcommand {sub!r}")
    out_dir = args.out_dir if args.out_dir is not None \
        else (os.path.dirname(os.path.abspath(args.manifest)) or ".")
    os.makedirs(out_dir, exist_ok=True)

    expected = list(man.get("outputs", [])) + [f"{sub}-manifest.json"]
    prior = {}
    for name in expected:
        path = os.path.join(out_dir, name)
        if os.path.exists(path):
            prior[name] = _sha256(path)

    names = _RUNNERS[sub](man["config"], out_dir)
    names.append(_write_manifest(out_dir, sub, man["config"], names))

    status = 0
    for name in names:
        digest = _sha256(os.path.join(out_dir, name))
        if name not in prior:
            print(f"new       {name}")
        elif prior[name] == digest:
            print(f"identical {name}")
        else:
            print(f"DIFFERS   {name}")
            status = 1
    return status


# -- parser ------------------------------------------------------------------


def _add_common(sp, config=True, out_dir=True):
    if config:
        sp.add_argument("--config", required=True,
                        help="flat key=value config file")
    if out_dir:
        sp.add_argument("--out-dir", default=".",
                        help="directory for output files (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlob",
        description="Optimal execution in a multiplicative limit order book",
    )
    parser.add_argument("--version", action="version",
                        version=f"mlob {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("check", help="validate the standing assumptions")
    _add_common(p, out_dir=False)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("boundary", help="solve and export the free boundary")
    _add_common(p)
    p.add_argument("--theta-max", type=float, default=None,
                   help="solve the curve up to this position (default 10)")
    p.add_argument("--mode", choices=("monotone", "acquisition"),
                   default="monotone")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("value", help="evaluate the value function")
    _add_common(p)
    p.add_argument("--y0", type=float, default=0.0)
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--theta-max", type=float, default=None)
    p.add_argument("--grid", type=int, default=0,
                   help="also dump an N x N value grid CSV")
    p.add_argument("--mode", choices=("monotone", "two-sided"),
                   default="monotone")
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("schedule", help="build an optimal schedule")
    _add_common(p)
    p.add_argument("--y0", type=float, default=0.0)
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--theta-max", type=float, default=None)
    p.add_argument("--mode",
                   choices=("monotone", "two-sided", "acquisition", "type-a"),
                   default="monotone")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("simulate",
                       help="Monte-Carlo martingale and dominance reports")
    _add_common(p)
    p.add_argument("--y0", type=float, default=0.0)
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--theta-max", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("monotone", "two-sided"),
                   default="monotone")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare-ls",
                       help="compare against the additive-impact model")
    _add_common(p)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_compare_ls)

    p = sub.add_parser("verify", help="run the full invariant suite")
    _add_common(p)
    p.add_argument("--y0", type=float, default=0.0)
    p.add_argument("--theta0", type=float, default=1.0)
    p.add_argument("--theta-max", type=float, default=None)
    p.add_argument("--grid", type=int, default=None,
                   help="VI sweep resolution per axis (default 60)")
    p.add_argument("--paths", type=int, default=None,
                   help="martingale check path count (default 2000)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("replay", help="rerun a manifest and compare outputs")
    p.add_argument("manifest", help="path to a *-manifest.json file")
    p.add_argument("--out-dir", default=None,
                   help="regenerate here instead of the manifest's directory")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MlobError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
