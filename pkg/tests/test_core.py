from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from globalspec.core import (
    MissamplingField, Record, RecordSet, SinusoidModel, evaluate_signal, noise_var_for_snr,
    omega_to_period, snr_db, wrap_phase,
)
from globalspec.exceptions import DataError

TEMPLATE = [1.0, 0.8, 0.6, 0.6]


def one_tone(omega=2 * np.pi, rho=1.0, phase=0.0):
    return SinusoidModel(np.array([omega]), np.array([[rho]]), np.array([[phase]]))


class TestRecord:
    def test_valid(self):
        r = Record("a", [0.0, 1.0, 2.5], [1, 2, 3])
        assert len(r) == 3 and r.span == 2.5

    @pytest.mark.parametrize("times,values", [
        ([0, 1], [1]),
        ([0], [1]),
        ([1, 1], [0, 0]),
        ([2, 1], [0, 0]),
        ([-1, 1], [0, 0]),
        ([0, np.inf], [0, 0]),
        ([0, 1], [0, np.nan]),
    ])
    def test_invalid(self, times, values):
        with pytest.raises(DataError):
            Record("a", times, values)

    def test_immutable_arrays(self):
        r = Record("a", [0.0, 1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            r.values[0] = 5

    def test_standardized(self):
        r = Record("a", [0, 1, 2, 3], [1.0, 3.0, 5.0, 7.0]).standardized()
        assert abs(r.values.mean()) < 1e-15 and abs(r.values.std() - 1) < 1e-15


class TestRecordSet:
    def test_needs_records(self):
        with pytest.raises(DataError):
            RecordSet(())

    def test_unique_ids(self):
        r = Record("a", [0, 1], [0, 0])
        with pytest.raises(DataError):
            RecordSet((r, r))

    def test_total(self):
        rs = RecordSet((Record("a", [0, 1], [0, 0]), Record("b", [0, 1, 2], [0, 0, 0])))
        assert rs.total_samples == 5 and rs.ids == ["a", "b"]


class TestSinusoidModel:
    def test_phases_wrapped(self):
        m = SinusoidModel(np.array([1.0]), np.array([[1.0]]), np.array([[3 * np.pi / 2]]))
        assert m.phases[0, 0] == pytest.approx(-np.pi / 2)
        assert wrap_phase(-np.pi) == pytest.approx(np.pi)

    @pytest.mark.parametrize("omegas,amps", [([2.0, 1.0], [[1, 1]]), ([0.0], [[1]]), ([1.0], [[-1]])])
    def test_invalid(self, omegas, amps):
        with pytest.raises(ValueError):
            SinusoidModel(np.array(omegas), np.array(amps, float), np.zeros_like(np.array(amps, float)))

    def test_periods_roundtrip(self):
        m = SinusoidModel.from_periods([100, 41, 23, 19], np.tile(TEMPLATE, (3, 1)))
        np.testing.assert_allclose(np.sort(omega_to_period(m.omegas)), [19, 23, 41, 100])
        back = SinusoidModel.from_dict(m.to_dict())
        for name in ("omegas", "amplitudes", "phases"):
            assert np.array_equal(getattr(back, name), getattr(m, name))


class TestEvaluateSignal:
    def test_cos_zero(self):
        assert evaluate_signal(one_tone(), 0, [0.0])[0] == 1.0

    def test_missampling_collapses_argument(self):
        t = np.linspace(0, 10, 17)
        np.testing.assert_allclose(evaluate_signal(one_tone(omega=0.731), 0, t, -t), 1.0, atol=0)

    def test_matches_resummation(self, rng):
        K, M = 3, 2
        omegas = np.sort(rng.uniform(0.1, 2, K))
        amps = rng.uniform(0.1, 2, (M, K))
        phases = rng.uniform(-3, 3, (M, K))
        model = SinusoidModel(omegas, amps, phases)
        t = rng.uniform(0, 50, 5)
        d = rng.normal(0, 0.1, 5)
        mpmath.mp.dps = 40
        for m in range(M):
            oracle = [float(sum(mpmath.mpf(model.amplitudes[m, k]) * mpmath.cos(
                mpmath.mpf(model.omegas[k]) * (mpmath.mpf(ti) + mpmath.mpf(di)) + mpmath.mpf(model.phases[m, k]))
                for k in range(K))) for ti, di in zip(t, d)]
            np.testing.assert_allclose(evaluate_signal(model, m, t, d), oracle, rtol=1e-12, atol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            evaluate_signal(one_tone(), 0, [0.0, 1.0], [0.0])
        with pytest.raises(ValueError):
            evaluate_signal(one_tone(), 1, [0.0])

    def test_zero_missampling_bitwise(self, rng):
        t = np.sort(rng.uniform(0, 100, 50))
        m = one_tone(0.3, 1.3, 0.2)
        assert np.array_equal(evaluate_signal(m, 0, t), evaluate_signal(m, 0, t, np.zeros(50)))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 5), st.floats(0, 3), st.integers(0, 1))
    def test_linear_in_amplitude(self, rho, phase, k):
        omegas = np.array([0.2, 0.5])
        amps = np.array([[rho, 0.7]])
        phases = np.array([[phase, 0.1]])
        t = np.linspace(0, 30, 11)
        base = SinusoidModel(omegas, amps, phases)
        doubled = amps.copy()
        doubled[0, k] *= 2
        zeroed = amps.copy()
        zeroed[0, k] = 0
        comp = evaluate_signal(base, 0, t) - evaluate_signal(SinusoidModel(omegas, zeroed, phases), 0, t)
        twice = evaluate_signal(SinusoidModel(omegas, doubled, phases), 0, t) - evaluate_signal(
            SinusoidModel(omegas, zeroed, phases), 0, t)
        np.testing.assert_allclose(twice, 2 * comp, atol=1e-12)


class TestSnr:
    def test_template_zero_db(self):
        m = SinusoidModel.from_periods([100, 41, 23, 19], [TEMPLATE])
        assert float(Fraction(sum(Fraction(str(a)) ** 2 for a in TEMPLATE))) == 2.36
        assert snr_db(m, 0, 1.18) == pytest.approx(0.0, abs=1e-12)
        assert snr_db(m, 0, 1.0) == pytest.approx(10 * np.log10(1.18), abs=1e-12)
        assert noise_var_for_snr(m, 0, 0.0) == pytest.approx(1.18, rel=1e-14)

    def test_sqrt2(self):
        m = one_tone(rho=np.sqrt(2))
        assert snr_db(m, 0, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert noise_var_for_snr(m, 0, 0.0) == pytest.approx(1.0, rel=1e-14)

    def test_errors(self):
        with pytest.raises(ValueError):
            snr_db(one_tone(), 0, 0.0)
        with pytest.raises(ValueError):
            noise_var_for_snr(one_tone(rho=0.0), 0, 0.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0.01, 10), min_size=1, max_size=5), st.floats(-30, 60))
    def test_roundtrip(self, amps, snr):
        omegas = np.arange(1, len(amps) + 1, dtype=float)
        m = SinusoidModel(omegas, np.array([amps]), np.zeros((1, len(amps))))
        assert abs(snr_db(m, 0, noise_var_for_snr(m, 0, snr)) - snr) <= 1e-12 * max(1, abs(snr))


def test_missampling_field():
    rs = RecordSet((Record("a", [0, 1], [0, 0]),))
    z = MissamplingField.zeros(rs)
    assert z.is_zero
    z.check(rs)
    with pytest.raises(ValueError):
        MissamplingField((np.zeros(3),)).check(rs)
