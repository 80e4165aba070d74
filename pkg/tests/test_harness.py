import json

import numpy as np
import pytest

from globalspec.core import MissamplingField, SinusoidModel
from globalspec.exceptions import ConfigError, ExperimentFailedError
from globalspec.glosa import ZoomConfig
from globalspec.harness import (
    ExperimentConfig, ExperimentResult, associate, bounds_command, estimate_command, format_bounds_csv,
    run_experiment, term_balance, with_overrides,
)
from globalspec.simulator import SimConfig, reference_intensities, replicate_rng, synthesize

FAST_ZOOM = {"zoom_steps": 2, "initial_bands": 16, "subdivisions": 4}


def config(**kw):
    d = {"snr_list": [10.0], "n_runs": 2, "seed": 4, "zoom": FAST_ZOOM}
    d.update(kw)
    return ExperimentConfig.from_dict(d)


@pytest.fixture(scope="module")
def small_result():
    return run_experiment(config())


@pytest.fixture(scope="module")
def simulated():
    recs, truth, miss, _ = synthesize(SimConfig(), reference_intensities(), np.inf, replicate_rng(2, 0))
    return recs, truth, miss


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.from_dict({"snr_list": [0, 5], "n_runs": 3})
        assert cfg.zoom.penalties.lam == 15.0 and cfg.zoom.penalties.zeta == 10.0
        assert cfg.sim.n_records == 3 and cfg.snr_list == (0.0, 5.0) and cfg.workers == 1

    @pytest.mark.parametrize("d", [
        {"snr_list": [0], "n_runs": 0},
        {"snr_list": [], "n_runs": 1},
        {"n_runs": 1},
        {"snr_list": [0], "n_runs": 1, "bogus": 1},
        {"snr_list": [0], "n_runs": 1, "zoom": {"tau": 0}},
        {"snr_list": [0], "n_runs": 1, "sim": {"periods": [100, 41], "amplitudes": [1.0]}},
        {"snr_list": [0], "n_runs": 1, "zoom": {"zoom_steps": 3, "subdivisions": [4]}},
    ])
    def test_invalid(self, d):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(d)

    def test_from_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"snr_list": [1], "n_runs": 1}))
        assert ExperimentConfig.from_file(tmp_path / "c.json").n_runs == 1
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "bad.json")


class TestAssociate:
    def test_one_to_one(self):
        err = associate([0.11, 0.12], [0.1, 0.2])
        np.testing.assert_allclose(err, [0.01 ** 2, 0.08 ** 2])

    def test_never_shares_an_estimate(self):
        err = associate([0.1, 0.5, 0.9], [0.1, 0.11, 0.89])
        np.testing.assert_allclose(err, [0.0, 0.39 ** 2, 0.01 ** 2], atol=1e-15)

    def test_unassigned_truth_uses_nearest(self):
        err = associate([0.1], [0.1, 0.3])
        np.testing.assert_allclose(err, [0.0, 0.2 ** 2])

    def test_empty(self):
        with pytest.raises(ValueError):
            associate([], [0.1])


class TestExperiment:
    def test_counts_and_invariants(self, small_result):
        assert small_result.n_runs == 2
        for row in small_result.rows:
            for m in ("glosa", "mean", "stacked"):
                assert row.n_ok[m] + row.n_failed[m] == 2
                assert np.all(row.mse[m] >= 0)
            assert row.n_bounds == 2 and row.bound_sum("lb") >= row.bound_sum("mcrb")

    def test_json_roundtrip_bitwise(self, small_result):
        text = small_result.to_json()
        assert ExperimentResult.from_json(text).to_json() == text

    def test_deterministic_files(self, small_result, tmp_path):
        small_result.write(tmp_path / "a")
        run_experiment(config()).write(tmp_path / "b")
        for name in ("result.json", "result.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert "wall_clock_s" in json.loads((tmp_path / "a" / "timing.json").read_text())

    def test_parallel_matches_serial(self, small_result):
        assert run_experiment(config(workers=2)).to_json() == small_result.to_json()

    def test_csv_layout(self, small_result):
        lines = small_result.to_csv().splitlines()
        assert lines[0].startswith("snr_db,method,mse_sum")
        assert len(lines) == 1 + 3

    def test_failure_budget(self):
        with pytest.raises(ExperimentFailedError) as info:
            run_experiment(config(zoom={**FAST_ZOOM, "tau": 1e9}, baselines=False, bounds=False))
        res = info.value.result
        assert res.rows[0].n_failed["glosa"] == 2 and len(res.failures) == 2

    def test_high_snr_smoke(self):
        cfg = ExperimentConfig.from_dict({"snr_list": [60.0], "n_runs": 10, "seed": 1,
                                          "sim": {"missampling": False}})
        row = run_experiment(cfg).rows[0]
        assert row.n_failed["glosa"] == 0
        g = row.mse_sum("glosa")
        assert g < 10 * row.bound_sum("crb")
        assert g < row.mse_sum("mean") and g < row.mse_sum("stacked")


class TestCommands:
    def test_estimate_noise_free(self):
        cfg = SimConfig(missampling=False)
        recs, truth, _, _ = synthesize(cfg, reference_intensities(), np.inf, replicate_rng(5, 0))
        report, spectrum = estimate_command(recs)
        periods = np.array(report["glosa"]["period_kyr"])
        width = ZoomConfig().final_band_width
        for w in truth.omegas:
            assert np.min(np.abs(2 * np.pi / periods - w)) < width
        assert spectrum.splitlines()[0] == "omega_rad_per_kyr,period_kyr,glosa,mean,stacked"
        assert set(report["baselines"]) == {"mean", "stacked"}
        f = np.array(report["glosa"]["frequency_per_kyr"])
        np.testing.assert_allclose(f, 1 / periods)

    def test_bounds_no_missampling(self, simulated):
        recs, truth, _ = simulated
        rows = bounds_command(recs.times, truth, MissamplingField.zeros(recs), [0.0, 10.0])
        for snr, crb, mcrb, bias, lb in rows:
            assert crb == lb == mcrb and bias == 0.0
        assert format_bounds_csv(rows).splitlines()[0] == "snr_db,crb_sum,mcrb_sum,bias_sq_sum,lb_sum"

    def test_bounds_with_missampling(self, simulated):
        recs, truth, miss = simulated
        rows = bounds_command(recs.times, truth, miss, [0.0, 20.0, 60.0])
        biases = [r[3] for r in rows]
        assert biases[0] == biases[1] == biases[2] > 0
        snr, crb, mcrb, bias, lb = rows[-1]
        assert abs((lb - crb) - bias) <= 0.05 * bias

    def test_term_balance(self, simulated):
        recs, _, _ = simulated
        terms = term_balance(recs)
        assert {"fit", "coupling", "sparsity", "total", "lambda", "zeta"} <= set(terms)
        assert terms["lambda"] == 15.0

    def test_overrides(self):
        z = with_overrides(ZoomConfig(), lam=3.0, zeta=None, tau=1e-3, zoom_steps=None)
        assert z.penalties.lam == 3.0 and z.penalties.zeta == 10.0 and z.tau == 1e-3 and z.zoom_steps == 4
