"""Monte-Carlo estimators, proceeds ledgers, and the LS comparison."""

import math

import numpy as np
import pytest

import oracles
from mlob import (Block, SimConfig, ValidationError, analytic_J,
                  deterministic_trajectory, g_process_check, gbm_paths,
                  ls_optimal_path, mlob_vs_ls_compare,
                  named_suboptimal_strategies, negative_price_probability,
                  optimal_schedule, optimal_schedule_two_sided,
                  pathwise_proceeds, perturbation_dominance,
                  standard_perturbations, write_paths_csv)


def _cfg(**kw):
    base = dict(mu=0.05, sigma=0.3, gamma=0.55, s0=1.0, horizon=1.0,
                dt=1e-2, n_paths=100, seed=3)
    base.update(kw)
    return SimConfig(**base)


def test_sim_config_validation():
    with pytest.raises(ValidationError):
        _cfg(sigma=-0.1)
    with pytest.raises(ValidationError):
        _cfg(dt=0.5)            # coarser than horizon/100
    with pytest.raises(ValidationError):
        _cfg(n_paths=0)
    with pytest.raises(ValidationError):
        _cfg(seed=1.5)
    with pytest.raises(ValidationError):
        _cfg(gamma=0.05, mu=0.05).require_positive_delta()
    assert _cfg().delta == pytest.approx(0.5)
    assert len(_cfg(dt=0.5, horizon=100.0).times()) >= 101


def test_gbm_deterministic_limit():
    cfg = _cfg(sigma=0.0, mu=-0.5, n_paths=3)
    bundle = gbm_paths(cfg)
    want = cfg.s0 * np.exp(cfg.mu * bundle.times)
    assert np.allclose(bundle.sbar, want[None, :], rtol=1e-12, atol=0.0)


def test_gbm_moments():
    cfg = _cfg(n_paths=20000)
    bundle = gbm_paths(cfg)
    s_T = bundle.sbar[:, -1]
    want_mean = cfg.s0 * math.exp(cfg.mu * cfg.horizon)
    se = float(np.std(s_T, ddof=1)) / math.sqrt(cfg.n_paths)
    assert abs(float(np.mean(s_T)) - want_mean) < 3.0 * se
    logs = np.log(s_T)
    want_log = (cfg.mu - 0.5 * cfg.sigma ** 2) * cfg.horizon
    se_log = float(np.std(logs, ddof=1)) / math.sqrt(cfg.n_paths)
    assert abs(float(np.mean(logs)) - want_log) < 3.0 * se_log


def test_gbm_seed_and_path_indexing():
    a = gbm_paths(_cfg(n_paths=7))
    b = gbm_paths(_cfg(n_paths=7))
    assert np.array_equal(a.sbar, b.sbar)
    c = gbm_paths(_cfg(n_paths=7, seed=4))
    assert not np.array_equal(a.sbar, c.sbar)
    # paths are seeded per index, so a shorter run is a prefix
    d = gbm_paths(_cfg(n_paths=5))
    assert np.array_equal(a.sbar[:5], d.sbar)


def test_deterministic_trajectory_matches_state(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    T = s.terminal_time
    times = np.linspace(0.0, T + 0.5, 400)
    theta, y, blocks = deterministic_trajectory(r1.spec, s, times)
    for i in range(0, 400, 37):
        t = float(times[i])
        if t <= T:
            th_ref, y_ref = s.state(t)
            assert theta[i] == pytest.approx(th_ref, abs=1e-9)
            assert y[i] == pytest.approx(y_ref, abs=1e-9)
        else:
            # position frozen, impact relaxing under h(y) = beta y
            assert theta[i] == 0.0
            want = r1.cp.y0 * math.exp(-r1.beta * (t - T))
            assert y[i] == pytest.approx(want, rel=1e-6)
    assert len(blocks) == 1
    assert blocks[0][0] == 0.0
    assert blocks[0][2] == pytest.approx(s.initial_block, rel=1e-12)


def test_pathwise_proceeds_deterministic_limit(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    T = s.terminal_time
    # sigma = 0 and gamma = 0 with mu = -delta reproduce the discounted
    # deterministic objective, so L_T must converge to analytic_J
    cfg = SimConfig(mu=-0.5, sigma=0.0, gamma=0.0, s0=1.0, horizon=T,
                    dt=T / 50000, n_paths=1, seed=0)
    led = pathwise_proceeds(r1.spec, s, gbm_paths(cfg), gamma=0.0)
    j = analytic_J(r1.spec, s, 1.0, 0.5)
    assert j == pytest.approx(oracles.R1_V_0_1, rel=1e-10)
    assert float(led.l_total[0]) == pytest.approx(j, rel=1e-6)
    assert float(led.block_component[0]) > 0.0
    assert float(led.continuous_component[0]) > 0.0
    # running proceeds start at the block value and increase
    assert np.all(np.diff(led.l_cum[0]) >= -1e-15)


def test_left_point_rule_first_order(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    T = s.terminal_time
    j = analytic_J(r1.spec, s, 1.0, 0.5)
    errs = []
    dts = [T / 100, T / 200, T / 400]
    for dt in dts:
        cfg = SimConfig(mu=-0.5, sigma=0.0, gamma=0.0, s0=1.0, horizon=T,
                        dt=dt, n_paths=1, seed=0)
        led = pathwise_proceeds(r1.spec, s, gbm_paths(cfg), gamma=0.0)
        errs.append(abs(float(led.l_total[0]) - j))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 0.8 < slope < 1.2


def test_expected_proceeds_match_analytic(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    cfg = SimConfig(mu=0.05, sigma=0.3, gamma=0.55, s0=1.0,
                    horizon=s.terminal_time, dt=s.terminal_time / 500,
                    n_paths=20000, seed=11)
    led = pathwise_proceeds(r1.spec, s, gbm_paths(cfg), gamma=cfg.gamma)
    j = analytic_J(r1.spec, s, cfg.s0, cfg.delta)
    se = float(np.std(led.l_total, ddof=1)) / math.sqrt(cfg.n_paths)
    assert abs(float(np.mean(led.l_total)) - j) < 3.0 * se


def test_g_process_martingale_for_optimal(r1):
    s = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    cfg = _cfg(n_paths=2000)
    rep = g_process_check(r1.spec, r1.field, s, cfg)
    assert rep.g0 == pytest.approx(oracles.R1_V_0_1, rel=1e-10)
    assert rep.martingale_consistent
    assert rep.supermartingale_consistent
    assert not rep.strictly_below
    assert rep.max_abs_z < 3.0
    assert rep.to_json()["n_paths"] == 2000


def test_g_process_supermartingale_for_suboptimal(r1):
    named = named_suboptimal_strategies(r1.spec, r1.cp, r1.fb)
    assert set(named) == {"immediate_dump", "delayed_entry",
                          "oversized_block", "undersized_block_pause",
                          "twap"}
    cfg = _cfg(n_paths=2000)
    rep = g_process_check(r1.spec, r1.field, named["oversized_block"], cfg)
    assert rep.supermartingale_consistent
    assert not rep.martingale_consistent
    dump = g_process_check(r1.spec, r1.field, named["immediate_dump"], cfg)
    assert dump.supermartingale_consistent
    assert dump.strictly_below


def test_g_process_two_sided(r1):
    y = r1.fb.y_of_theta(0.5) - 0.3
    s = optimal_schedule_two_sided(r1.spec, r1.cp, r1.fb, y, 0.2)
    cfg = _cfg(n_paths=2000, horizon=1.5, dt=1.5e-2)
    rep = g_process_check(r1.spec, r1.field, s, cfg, two_sided=True)
    assert rep.g0 == pytest.approx(oracles.R1_TWO_SIDED_W, rel=1e-10)
    assert rep.martingale_consistent


def test_perturbation_dominance(r1):
    perts = standard_perturbations(r1.spec, r1.cp, r1.fb, 0.0, 1.0)
    assert len(perts) == 21
    cfg = _cfg()
    rep = perturbation_dominance(r1.spec, r1.field, 0.0, 1.0, perts, cfg)
    assert rep.all_dominated
    assert rep.min_margin >= -1e-9
    assert rep.field_gap < 1e-9
    assert len(rep.results) == 21
    by_name = {r.name: r for r in rep.results}
    assert by_name["optimal"].margin == pytest.approx(0.0, abs=1e-12)
    assert all(r.admissible for r in rep.results)


def test_perturbation_inadmissible_flagged(r1):
    # selling half the position is not an admissible competitor
    undersell = optimal_schedule(r1.spec, r1.cp, r1.fb, 0.0, 0.5)
    bad = ("undersell", type(undersell)(
        "liquidation", 0.0, 1.0, (Block(0.0, 0.5),), 0.0, r1.spec, r1.fb))
    rep = perturbation_dominance(r1.spec, r1.field, 0.0, 1.0,
                                 [("optimal", optimal_schedule(
                                     r1.spec, r1.cp, r1.fb, 0.0, 1.0)),
                                  bad], _cfg())
    res = {r.name: r for r in rep.results}
    assert not res["undersell"].admissible
    assert res["undersell"].reason != ""
    assert math.isnan(res["undersell"].margin)
    assert rep.all_dominated


def test_ls_reference_values():
    cfg = SimConfig(mu=-0.5, sigma=1.0, gamma=0.0, s0=1.0, horizon=1.0,
                    dt=1e-3, n_paths=3, seed=5)
    bundle = gbm_paths(cfg)
    st = ls_optimal_path(cfg, 1.0, 1.0, bundle)
    assert st.z[0, 0] == pytest.approx(oracles.LS_Z0, rel=1e-12)
    assert np.allclose(st.x[:, 0], oracles.LS_X0, rtol=1e-12)
    # the terminal block closes the position exactly
    assert np.all(st.x[:, -1] == 0.0)
    assert np.allclose(st.x[:, -2], -st.final_block, rtol=0, atol=1e-12)
    assert not st.warn_dt_coarse


def test_ls_bachelier_closed_form():
    mu, rho, T, x0 = -0.5, 1.0, 1.0, 1.0
    cfg = SimConfig(mu=mu, sigma=1.0, gamma=0.0, s0=1.0, horizon=T,
                    dt=1e-3, n_paths=2, seed=5)
    st = ls_optimal_path(cfg, rho, x0, gbm_paths(cfg), driver="bachelier")
    # every path collapses to the deterministic additive-model solution
    assert np.array_equal(st.x[0], st.x[1])
    z0b = mu * T + 0.5 * rho * mu * T * T
    x_pre = (x0 - 0.5 * (1.0 + rho * T) * z0b) / (2.0 + rho * T) \
        + mu / (2.0 * rho) - rho * mu * T * T / 4.0
    assert -float(st.final_block[0]) == pytest.approx(x_pre, abs=5e-4)


def test_negative_price_probability():
    cfg = SimConfig(mu=-0.5, sigma=0.0, gamma=0.0, s0=1.0, horizon=1.0,
                    dt=1e-3, n_paths=50, seed=2)
    rep = negative_price_probability(cfg, 1.0, 1.0, 1.0)
    assert rep.estimate == 0.0
    assert rep.std_error == 0.0
    noisy = SimConfig(mu=-0.5, sigma=1.0, gamma=0.0, s0=1.0, horizon=1.0,
                      dt=1e-3, n_paths=400, seed=2)
    rep = negative_price_probability(noisy, 1.0, 1.0, 1.0)
    assert 0.0 < rep.estimate < 1.0
    assert rep.std_error > 0.0
    assert rep.to_json()["n_paths"] == 400


def test_mlob_vs_ls_compare(tmp_path):
    cfg = SimConfig(mu=-0.5, sigma=1.0, gamma=0.0, s0=1.0, horizon=1.0,
                    dt=2e-3, n_paths=300, seed=7)
    bundle = mlob_vs_ls_compare(cfg, rho=1.0, c=1.0, x_init=1.0,
                                ls_horizons=(1.0,), n_display_paths=5)
    # matched parameters reproduce the reference liquidation time
    assert bundle.t_mlob == pytest.approx(oracles.R1_T_OPT_0_1, rel=1e-9)
    assert bundle.mlob_monotone
    run = bundle.ls_runs[0]
    assert run.n_paths == 300
    assert run.frac_nonmonotone > 0.9
    assert run.mean_final_block_abs > 0.05
    assert run.display_x.shape[0] == 5
    assert np.all(run.display_x[:, -1] == 0.0)
    out = bundle.to_json()
    assert out["t_mlob"] == bundle.t_mlob
    assert out["ls_runs"][0]["frac_nonmonotone"] == run.frac_nonmonotone
    path = tmp_path / "paths.csv"
    write_paths_csv(bundle, run, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,path_id,sbar,y,theta,x_ls"
    assert len(lines) == 1 + 5 * len(run.times)
