from dataclasses import replace

import numpy as np
import pytest

from conftest import milankovitch_records

from globalspec.core import Record, RecordSet, SinusoidModel, evaluate_signal
from globalspec.dictionary import BandGrid
from globalspec.exceptions import AllBandsPrunedError
from globalspec.jointsolver import PenaltyConfig
from globalspec.glosa import (
    ZoomConfig, amplitude_readout, gridless_refine, projection_residual, run_glosa,
)


# one record cannot activate a band unless its coupling weight exceeds lambda
SINGLE = ZoomConfig(penalties=PenaltyConfig(zeta=10.0, lam=5.0))


def single_tone(omega=0.21, phase=0.4, n=150, span=600.0, seed=4, rho=1.3):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, span, n))
    model = SinusoidModel(np.array([omega]), np.array([[rho]]), np.array([[phase]]))
    return RecordSet((Record("a", t, evaluate_signal(model, 0, t)),)), model


@pytest.fixture(scope="module")
def milankovitch_estimate(milankovitch):
    recs, truth = milankovitch
    return run_glosa(recs), truth


class TestZoomConfig:
    def test_final_width(self):
        cfg = ZoomConfig()
        assert abs(cfg.final_band_width - cfg.omega_max / 1024) <= 1e-12
        cfg = ZoomConfig(zoom_steps=3, initial_bands=10, subdivisions=[3, 5])
        assert abs(cfg.final_band_width - cfg.omega_max / 150) <= 1e-12

    @pytest.mark.parametrize("kw", [dict(zoom_steps=0), dict(initial_bands=1), dict(subdivisions=1),
                                    dict(tau=0.0), dict(omega_max=-1.0), dict(zoom_steps=3, subdivisions=[4])])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ZoomConfig(**kw)


class TestRunGlosa:
    def test_milankovitch_recovered(self, milankovitch_estimate):
        est, truth = milankovitch_estimate
        width = ZoomConfig().final_band_width
        for w in truth.omegas:
            assert np.min(np.abs(est.omegas - w)) < width
        np.testing.assert_allclose(est.strongest(4), truth.omegas, atol=width)
        assert np.all(np.diff(est.omegas) > 0)

    def test_estimates_inside_regions(self, milankovitch_estimate):
        est, _ = milankovitch_estimate
        assert all(est.regions.contains(w) >= 0 for w in est.omegas)

    def test_zoom_soundness(self, milankovitch_estimate):
        est, truth = milankovitch_estimate
        assert len(est.levels) == 4
        for level in est.levels:
            active = level.grid.subset(level.active)
            assert all(active.contains(w) >= 0 for w in truth.omegas)

    def test_final_level_width(self, milankovitch_estimate):
        est, _ = milankovitch_estimate
        np.testing.assert_allclose(est.levels[-1].grid.widths, ZoomConfig().final_band_width, rtol=1e-12)

    def test_single_tone_dense_grid_oracle(self):
        recs, model = single_tone()
        est = run_glosa(recs, SINGLE)
        w0 = model.omegas[0]
        grid = w0 + np.arange(-100, 101) * 1e-7
        res = [projection_residual(recs, [w], fit_offset=True)[0] for w in grid]
        oracle = grid[int(np.argmin(res))]
        assert abs(oracle - w0) < 1e-7
        k = np.argmin(np.abs(est.omegas - w0))
        assert abs(est.omegas[k] - oracle) < 1e-6
        assert abs(est.omegas[k] - w0) < 1e-6

    def test_tau_too_large(self):
        recs, _ = single_tone()
        with pytest.raises(AllBandsPrunedError) as info:
            run_glosa(recs, ZoomConfig(tau=1e6))
        assert info.value.level == 1 and np.max(info.value.powers) <= 1e6

    def test_raw_amplitudes_on_data_scale(self):
        recs, model = single_tone(rho=3.0)
        est = run_glosa(recs, replace(SINGLE, zoom_steps=2))
        k = np.argmin(np.abs(est.omegas - model.omegas[0]))
        assert est.raw_amplitudes.amplitudes[0, k] == pytest.approx(3.0, rel=1e-3)


class TestGridless:
    def test_bracketing_bands_noise_free(self, milankovitch):
        recs, truth = milankovitch
        bands = BandGrid(truth.omegas - 2e-3, truth.omegas + 1.5e-3)
        res = gridless_refine(recs, bands)
        np.testing.assert_allclose(res.omegas, truth.omegas, atol=1e-8)
        assert res.projected_gradient <= 1e-9 and not res.rank_deficient

    def test_symmetric_band_interior(self):
        recs, model = single_tone()
        w0 = model.omegas[0]
        res = gridless_refine(recs, BandGrid([w0 - 0.01], [w0 + 0.01]))
        assert w0 - 0.01 < res.omegas[0] < w0 + 0.01
        assert abs(res.omegas[0] - w0) < 1e-8

    def test_not_worse_than_coarse_grid(self, rng):
        recs, truth = milankovitch_records(noise_std=0.5, seed=9)
        bands = BandGrid(truth.omegas - 5e-3, truth.omegas + 5e-3)
        res = gridless_refine(recs, bands)
        for k in range(4):
            for w in np.linspace(bands.starts[k], bands.ends[k], 200):
                trial = res.omegas.copy()
                trial[k] = w
                assert res.objective <= projection_residual(recs, trial)[0] * (1 + 1e-12)

    def test_coalescing_bands_flagged(self):
        recs, model = single_tone()
        w0 = model.omegas[0]
        with pytest.warns(RuntimeWarning):
            res = gridless_refine(recs, BandGrid([w0 - 1e-12, w0], [w0, w0 + 1e-12]))
        assert res.rank_deficient and np.all(np.isfinite(res.omegas))

    def test_phase_shift_invariance(self, milankovitch):
        recs, truth = milankovitch
        shifted = SinusoidModel(truth.omegas, truth.amplitudes, truth.phases + np.array([[0.3], [1.1], [-2.0]]))
        recs2 = RecordSet(tuple(r.with_values(evaluate_signal(shifted, m, r.times)) for m, r in enumerate(recs)))
        bands = BandGrid(truth.omegas - 2e-3, truth.omegas + 1.5e-3)
        a, b = gridless_refine(recs, bands), gridless_refine(recs2, bands)
        np.testing.assert_allclose(a.omegas, b.omegas, atol=1e-8)
        scale = sum(float(r.values @ r.values) for r in recs)
        assert abs(a.objective - b.objective) <= 1e-12 * scale


class TestAmplitudes:
    def test_exact_noise_free(self):
        recs, model = single_tone(phase=-2.2)
        est = amplitude_readout(recs, model.omegas)
        assert abs(est.amplitudes[0, 0] - 1.3) <= 1e-10
        assert abs(est.phases[0, 0] + 2.2) <= 1e-10

    def test_global_mean(self):
        t = np.linspace(0, 100, 60)
        model = SinusoidModel(np.array([0.3]), np.array([[1.0], [0.8]]), np.zeros((2, 1)))
        recs = RecordSet(tuple(Record(f"r{m}", t, evaluate_signal(model, m, t)) for m in range(2)))
        assert amplitude_readout(recs, [0.3]).global_amplitudes[0] == pytest.approx(0.9, abs=1e-12)

    def test_normal_equations_oracle(self, rng):
        import mpmath
        mpmath.mp.dps = 50
        t = np.sort(rng.uniform(0, 50, 12))
        y = rng.normal(size=12)
        w = np.array([0.2, 0.9])
        recs = RecordSet((Record("a", t, y),))
        est = amplitude_readout(recs, w)
        A = mpmath.matrix([[f(mpmath.mpf(wk) * mpmath.mpf(tn)) for wk in w for f in (mpmath.cos, mpmath.sin)]
                           for tn in t])
        coef = mpmath.lu_solve(A.T * A, A.T * mpmath.matrix(y.tolist()))
        for k in range(2):
            a, b = coef[2 * k], coef[2 * k + 1]
            assert est.amplitudes[0, k] == pytest.approx(float(mpmath.sqrt(a ** 2 + b ** 2)), rel=1e-9)
            assert est.phases[0, k] == pytest.approx(float(mpmath.atan2(-b, a)), abs=1e-9)

    def test_underdetermined(self):
        recs = RecordSet((Record("a", [0.0, 1.0, 2.0], [1.0, 0.0, 1.0]),))
        with pytest.raises(ValueError):
            amplitude_readout(recs, [0.1, 0.2])
        with pytest.raises(ValueError):
            amplitude_readout(recs, [0.1, 0.1])
