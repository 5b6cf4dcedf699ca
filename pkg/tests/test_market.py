"""Order-book primitives: shape functions, assumptions, proceeds, config."""

import math

import numpy as np
import pytest

from mlob import (BookExhaustedError, ConfigError, DomainError, PowerLawBook,
                  ValidationError, block_trade_proceeds, check_assumptions,
                  load_config, power_law_spec, spec_from_config)


def test_exponential_book_closed_forms():
    spec = power_law_spec(PowerLawBook(2.0, 1.0, 1.0), 0.5)
    for y in (-1.5, -0.3, 0.0, 0.7, 2.0):
        assert spec.f(y) == pytest.approx(math.exp(y / 2.0), rel=1e-14)
        assert spec.F(y) == pytest.approx(2.0 * math.expm1(y / 2.0), rel=1e-13)
        assert spec.lam(y) == pytest.approx(0.5, rel=1e-14)


def test_general_book_consistency():
    spec = power_law_spec(PowerLawBook(1.0, 0.5, 1.0), 0.1)
    assert spec.f(0.0) == 1.0
    assert spec.F(0.0) == 0.0
    for y in (-1.2, -0.4, 0.3, 1.5):
        h = 1e-6
        fd_f = (spec.F(y + h) - spec.F(y - h)) / (2.0 * h)
        assert fd_f == pytest.approx(spec.f(y), rel=1e-8)
        fd_lam = (spec.f(y + h) - spec.f(y - h)) / (2.0 * h) / spec.f(y)
        assert fd_lam == pytest.approx(spec.lam(y), rel=1e-7)
    # power-law density: q(f(y)) * f'(y) = 1 by construction
    assert spec.f(-1.99) > 0.0
    with pytest.raises(DomainError):
        spec.require_in_domain(-2.0)


def test_shape_exponent_range():
    # admissible iff r < 1 + beta/(beta+delta)
    power_law_spec(PowerLawBook(1.0, 1.6, 1.0), 0.5)
    with pytest.raises(ValidationError):
        power_law_spec(PowerLawBook(1.0, 1.0 + 1.0 / 1.5, 1.0), 0.5)
    with pytest.raises(ValidationError):
        power_law_spec(PowerLawBook(1.0, -0.1, 1.0), 0.5)


def test_check_assumptions(r1, r05):
    for preset in (r1, r05):
        rep = check_assumptions(preset.spec)
        assert rep.valid
        assert rep.failed() == []
        assert rep.conditions["h_prime_positive"]
        assert rep.conditions["y0_bracketed"]


def test_check_assumptions_rejects_zero_delta():
    spec = power_law_spec(PowerLawBook(1.0, 1.0, 1.0), 0.0)
    rep = check_assumptions(spec)
    assert not rep.valid
    assert "delta_positive" in rep.failed()


def test_block_proceeds_closed_form(r1):
    # r=1: proceeds = c (e^{y/c} - e^{(y-d)/c})
    for y, d in ((0.0, 1.0), (-0.5, 0.25), (1.0, 2.0)):
        want = math.exp(y) - math.exp(y - d)
        got = block_trade_proceeds(r1.spec, y, d)
        assert got == pytest.approx(want, rel=1e-13)


def test_block_splitting_exact(r1, r05):
    rng = np.random.default_rng(7)
    for preset in (r1, r05):
        for _ in range(20):
            y = float(rng.uniform(-0.5, 1.0))
            d = float(rng.uniform(0.1, 1.0))
            n = int(rng.integers(2, 6))
            whole = block_trade_proceeds(preset.spec, y, d)
            parts = sum(
                block_trade_proceeds(preset.spec, y - k * d / n, d / n)
                for k in range(n)
            )
            assert parts == pytest.approx(whole, rel=1e-12, abs=1e-14)


def test_block_proceeds_exhaustion(r05):
    # finite support on the sell side for r < 1: y - d must stay above -c/(1-r)
    with pytest.raises(BookExhaustedError):
        block_trade_proceeds(r05.spec, 0.0, 2.5)


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "m.cfg"
    path.write_text(
        "# comment line\n"
        "kind = power_law\n"
        "c = 1.5   # inline comment\n"
        "r = 1\n"
        "beta = 0.8\n"
        "delta = 0.3\n"
        "n_paths = 500\n"
    )
    cfg = load_config(path)
    assert cfg["kind"] == "power_law"
    assert cfg["c"] == 1.5
    assert cfg["r"] == 1 and isinstance(cfg["r"], int)
    assert cfg["n_paths"] == 500
    spec = spec_from_config(cfg)
    assert spec.delta == 0.3


@pytest.mark.parametrize("body, msg", [
    ("kind = power_law\nwidth = 2\n", "unknown config key"),
    ("c = 1\nc = 2\n", "duplicate key"),
    ("c one\n", "expected key=value"),
    ("c = abc\n", "could not parse numeric"),
])
def test_load_config_rejects(tmp_path, body, msg):
    path = tmp_path / "bad.cfg"
    path.write_text(body)
    with pytest.raises(ConfigError, match=msg):
        load_config(path)


def test_spec_from_config_delta_resolution():
    base = {"kind": "power_law", "c": 1.0, "r": 1.0, "beta": 1.0}
    assert spec_from_config({**base, "delta": 0.5}).delta == 0.5
    assert spec_from_config({**base, "gamma": 0.0, "mu": -0.5}).delta == 0.5
    with pytest.raises(ValidationError):
        spec_from_config({**base, "delta": 0.5, "gamma": 0.0, "mu": -0.4})
    with pytest.raises(ConfigError):
        spec_from_config(base)
    with pytest.raises(ConfigError):
        spec_from_config({**base, "delta": 0.5, "kind": "linear"})
