import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from minimax_iv.harness import (CSV_COLUMNS, ConfigError, FamilySpec, RateReport, RunConfig, build_families,
                                derive_seed, emit_reports, fit_loglog_slope, load_config, load_report, read_csv,
                                replication_seed, run_rate_sweep)
from minimax_iv.harness.config import DEFAULT_N_GRID
from minimax_iv.harness.reports import RateRow, write_csv
from minimax_iv.harness.verify import VerifySummary, aggregate_summaries, verify_suite


def small_config(**kw):
    base = dict(n_grid=(64, 128, 256), reps=4, estimators={"penalized_minimax": {}, "dikkala": {}})
    base.update(kw)
    return RunConfig(**base)


# ---------------------------------------------------------------- slopes

def test_slope_examples():
    ns = [512 * 2**k for k in range(7)]
    s, se = fit_loglog_slope([(n, n**-0.25) for n in ns])
    assert s == pytest.approx(-0.25, abs=1e-12) and se == pytest.approx(0.0, abs=1e-12)
    assert fit_loglog_slope([(n, 3.0) for n in ns])[0] == pytest.approx(0.0, abs=1e-12)
    assert fit_loglog_slope([(100, 1.0), (10000, 0.1)]) == (pytest.approx(-0.5), 0.0)


def test_slope_errors():
    with pytest.raises(ValueError):
        fit_loglog_slope([(10, 1.0)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(10, 1.0), (20, 0.0)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(10, 1.0), (20, math.nan)])


@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_slope_recovers_power_law(p, c):
    s, _ = fit_loglog_slope([(n, c * n**p) for n in DEFAULT_N_GRID])
    assert s == pytest.approx(p, abs=1e-9)


# ---------------------------------------------------------------- seeds and config

def test_seed_is_order_free():
    a = replication_seed(0, "dikkala", 512, 3)
    assert a == replication_seed(0, "dikkala", 512, 3)
    assert a != replication_seed(0, "liao", 512, 3)
    assert 0 <= derive_seed(5, "x") < 2**63


def test_estimator_order_does_not_change_results():
    a = run_rate_sweep(small_config(estimators={"penalized_minimax": {}, "dikkala": {}}))
    b = run_rate_sweep(small_config(estimators={"dikkala": {}, "penalized_minimax": {}}))
    for est in ("penalized_minimax", "dikkala"):
        for n in (64, 128, 256):
            assert a.row(est, n) == b.row(est, n)


def test_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(n_grid=(100, 50)).validate()
    with pytest.raises(ConfigError):
        RunConfig(reps=0).validate()
    with pytest.raises(ConfigError):
        RunConfig(estimators={"nope": {}}).validate()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"unknown": 1})
    with pytest.raises(ConfigError):
        RunConfig(estimators={"both_worlds": {"delta": 2.0}}).validate()


def test_config_round_trip_and_hash(tmp_path):
    cfg = small_config(out_dir="a")
    back = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.config_hash() == cfg.config_hash()
    # the output directory does not enter the hash
    assert small_config(out_dir="b").config_hash() == cfg.config_hash()
    assert cfg.with_seed(3).config_hash() != cfg.config_hash()
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"estimators": ["liao"], "n_grid": [10, 20]}))
    loaded = load_config(p)
    assert loaded.estimators == {"liao": {"c": 1.0}}
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_family_spec():
    spec = FamilySpec()
    assert spec.scale_at(16) == pytest.approx(0.5)
    assert FamilySpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigError):
        FamilySpec.from_dict({"bad": 1})


def test_build_families_is_n_independent_in_direction(default_scenario):
    H1, G1 = build_families(default_scenario, 512, FamilySpec(), 0)
    H2, G2 = build_families(default_scenario, 2048, FamilySpec(), 0)
    np.testing.assert_array_equal(H1[0], H2[0])
    np.testing.assert_allclose(H1[1] - H1[0], math.sqrt(2) * (H2[1] - H2[0]), atol=1e-12)
    np.testing.assert_array_equal(G1.members, G2.members)
    assert H1.tags[-1] == "structural"


# ---------------------------------------------------------------- sweeps and reports

def test_sweep_shape_and_determinism():
    cfg = small_config()
    a, b = run_rate_sweep(cfg), run_rate_sweep(cfg)
    assert len(a.rows) == 2 * 3
    assert a.to_json() == b.to_json()
    assert a.config_hash == cfg.config_hash()
    assert all(r.violations >= 0 and r.reps == 4 for r in a.rows)
    assert set(a.slopes["dikkala"]) >= {"l2_mean", "proj_mse_mean", "l2_logmean", "proj_mse_logmean"}
    assert len(a.seeds) == 2 * 3 * 4


def test_population_sweep_is_exact():
    rep = run_rate_sweep(small_config(population=True, estimators={"penalized_minimax": {}}))
    assert all(r.l2_mean < 1e-9 for r in rep.rows)
    assert rep.slopes["penalized_minimax"]["l2_mean"] is None


def test_failures_mark_cells(monkeypatch):
    import minimax_iv.harness.sweep as sweep

    real = sweep.fit_estimator

    def flaky(name, data, H, G, hyper, n):
        if n == 128:
            raise FloatingPointError("diverged")
        return real(name, data, H, G, hyper, n)

    monkeypatch.setattr(sweep, "fit_estimator", flaky)
    rep = run_rate_sweep(small_config(estimators={"penalized_minimax": {}}))
    bad = rep.row("penalized_minimax", 128)
    assert not bad.complete and bad.failures == 4 and bad.reps == 0
    assert rep.row("penalized_minimax", 64).complete
    assert all("diverged" in r["error"] for r in rep.replications if r["n"] == 128)


def test_reports_round_trip(tmp_path):
    rep = run_rate_sweep(small_config())
    paths = emit_reports(rep, tmp_path)
    assert [p.rsplit(".", 1)[1] for p in paths] == ["csv", "json"]
    assert (tmp_path / "rates.csv").read_text().splitlines()[0] == "estimator,n,reps,l2_mean,l2_median,proj_mse_mean,violations"
    assert load_report(tmp_path / "rates.json") == rep
    rows = read_csv(tmp_path / "rates.csv")
    for row, r in zip(rows, rep.rows):
        assert row["l2_mean"] == r.l2_mean and row["n"] == r.n
    with pytest.raises(ValueError):
        emit_reports(rep, tmp_path, formats=("xml",))


def test_empty_report_csv(tmp_path):
    write_csv(RateReport(), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert read_csv(tmp_path / "e.csv") == []


def test_rate_row_round_trip():
    r = RateRow("x", 10, 3, 1.0, 1.0, 0.5, 1.5, 0.1, 0.1, 0, 1, 0.9)
    assert RateReport.from_dict(RateReport([r]).to_dict()).rows[0] == r
    assert not r.complete


# ---------------------------------------------------------------- verification suite

def quick_verify(**kw):
    v = {"random_scenarios": 3, "seeds": 6, "n_values": [50], "misspec_reps": 2, "games": 5,
         "eps_h": [0.1], "eps_g": [0.0]}
    v.update(kw)
    return RunConfig(verify=v)


def test_verify_suite_counts():
    s = verify_suite(quick_verify())
    assert s.counts["main_bound"]["pass"] + s.counts["main_bound"]["fail"] == 6
    assert s.counts["identification"] == {"pass": 3, "fail": 0, "unmet": 0}
    assert s.counts["saddle_null_shift_rejected"]["fail"] == 0
    assert s.counts["source_growth"]["pass"] == 1
    assert s.config_hash == quick_verify().config_hash()


def test_verify_guard_reports_unmet():
    s = verify_suite(quick_verify(exclude_h0=True))
    assert s.counts["main_bound"] == {"pass": 0, "fail": 0, "unmet": 6}


def test_aggregate_refuses_mismatched_hashes():
    a = VerifySummary({"x": {"pass": 1, "fail": 0, "unmet": 0}}, "h1")
    b = VerifySummary({"x": {"pass": 2, "fail": 1, "unmet": 0}}, "h1")
    total = aggregate_summaries([a, b])
    assert total.counts["x"] == {"pass": 3, "fail": 1, "unmet": 0}
    assert not total.ok
    with pytest.raises(ValueError):
        aggregate_summaries([a, VerifySummary({}, "h2")])
    assert VerifySummary.from_dict(a.to_dict()).counts == a.counts
