import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from globalspec.core import Record, RecordSet
from globalspec.dictionary import (
    BandGrid, band_integrals, build_narrowband, build_wideband, narrowband_matrix, refine_grid,
)
from globalspec.exceptions import NoActiveBandsError


def quad_integral(t, s, e):
    if t == 0:
        return complex(quad(lambda w: 1.0, s, e)[0])
    re = quad(lambda w: 1.0, s, e, weight="cos", wvar=t, epsabs=1e-15, epsrel=1e-12)[0]
    im = quad(lambda w: 1.0, s, e, weight="sin", wvar=t, epsabs=1e-15, epsrel=1e-12)[0]
    return re + 1j * im


class TestBandGrid:
    def test_uniform(self):
        g = BandGrid.uniform(1.0, 4)
        np.testing.assert_allclose(g.starts, [0, .25, .5, .75])
        assert g.count == 4 and g.contains(0.3) == 1 and g.contains(2.0) == -1

    @pytest.mark.parametrize("s,e", [([0.1], [0.1]), ([0, 0.5], [0.6, 1]), ([0.5, 0], [1, 0.4]),
                                     ([-0.1], [0.2]), ([], [])])
    def test_invalid(self, s, e):
        with pytest.raises(ValueError):
            BandGrid(s, e)

    def test_merged(self):
        g = BandGrid([0, 1, 3, 3.5], [1, 2, 3.5, 4])
        m = g.merged()
        np.testing.assert_array_equal(m.starts, [0, 3])
        np.testing.assert_array_equal(m.ends, [2, 4])
        assert g.merged(gap=1.0).count == 1


class TestWideband:
    def test_time_zero(self):
        rs = RecordSet((Record("a", [0.0, 1.0], [0, 0]),))
        d = build_wideband(rs, BandGrid([0.1], [0.3]))[0]
        assert d.matrix[0, 0] == pytest.approx(0.2 + 0j, abs=1e-16)

    def test_closed_form(self, rng):
        t = rng.uniform(0.1, 500, 30)
        s, e = 0.02, 0.09
        expected = (np.exp(1j * e * t) - np.exp(1j * s * t)) / (1j * t)
        np.testing.assert_allclose(band_integrals(t, [s], [e])[:, 0], expected, rtol=1e-12, atol=1e-14)

    def test_quadrature_oracle(self, rng):
        t = np.concatenate([[0.0, 1e-9], rng.uniform(0, 400, 12)])
        starts = np.array([0.0, 0.013, 0.4])
        ends = np.array([0.011, 0.05, 0.41])
        D = band_integrals(t, starts, ends)
        for n, tn in enumerate(t):
            for c in range(3):
                ref = quad_integral(tn, starts[c], ends[c])
                assert abs(D[n, c] - ref) <= 1e-10 * abs(ref)

    def test_narrow_band_limit(self, rng):
        t = rng.uniform(0, 300, 20)
        w0, h = 0.37, 1e-6
        D = band_integrals(t, [w0 - h / 2], [w0 + h / 2])[:, 0]
        np.testing.assert_allclose(D, h * np.exp(1j * w0 * t), rtol=1e-4)

    def test_real_reconstruction(self, rng):
        t = np.sort(rng.uniform(0, 100, 25))
        g = BandGrid.uniform(1.0, 6)
        pos = band_integrals(t, g.starts, g.ends)
        neg = band_integrals(t, -g.ends[::-1], -g.starts[::-1])[:, ::-1]
        np.testing.assert_allclose(neg, np.conj(pos), atol=1e-12)
        beta = rng.normal(size=6) + 1j * rng.normal(size=6)
        full = pos @ beta + neg @ np.conj(beta)
        assert np.max(np.abs(full.imag)) <= 1e-10 * np.max(np.abs(full))
        np.testing.assert_allclose(full.real, 2 * (pos @ beta).real, atol=1e-12)

    def test_center_reference(self):
        rs = RecordSet((Record("a", [2.0, 4.0], [0, 0]),))
        d = build_wideband(rs, BandGrid([0.1], [0.3]), time_reference="center")[0]
        assert d.matrix[0, 0] == pytest.approx(band_integrals([-1.0], [0.1], [0.3])[0, 0])
        np.testing.assert_allclose(np.linalg.norm(d.unit_normalized(), axis=0), 1.0)


class TestNarrowband:
    def test_time_zero(self):
        np.testing.assert_array_equal(narrowband_matrix([0.0], [0.7]), [[1.0, 0.0]])

    def test_pi(self):
        A = build_narrowband(RecordSet((Record("a", [0.0, 1.0, 2.0], [0, 0, 0]),)), [np.pi])[0].matrix
        np.testing.assert_allclose(A[:, 0], [1, -1, 1], atol=1e-12)
        np.testing.assert_allclose(A[:, 1], [0, 0, 0], atol=1e-12)

    def test_direct_evaluation(self, rng):
        t = np.sort(rng.uniform(0, 50, 9))
        w = np.array([0.1, 0.33, 1.7])
        A = narrowband_matrix(t, w)
        for k, wk in enumerate(w):
            for n, tn in enumerate(t):
                assert A[n, 2 * k] == pytest.approx(np.cos(wk * tn), abs=1e-15)
                assert A[n, 2 * k + 1] == pytest.approx(np.sin(wk * tn), abs=1e-15)

    @pytest.mark.parametrize("w", [[0.1, 0.1], [0.0], [-1.0]])
    def test_invalid(self, w):
        with pytest.raises(ValueError):
            build_narrowband(RecordSet((Record("a", [0.0, 1.0], [0, 0]),)), w)


class TestRefine:
    def test_quarters(self):
        g = refine_grid(BandGrid([0.0], [1.0]), [0], 4)
        np.testing.assert_allclose(g.starts, [0, .25, .5, .75])
        np.testing.assert_allclose(g.ends, [.25, .5, .75, 1])

    def test_two_separated(self):
        g = refine_grid(BandGrid.uniform(1.0, 5), [1, 3], 3)
        assert g.count == 6
        assert np.all(g.starts[1:] >= g.ends[:-1])
        assert g.ends[2] == pytest.approx(0.4) and g.starts[3] == pytest.approx(0.6)

    def test_empty(self):
        with pytest.raises(NoActiveBandsError):
            refine_grid(BandGrid.uniform(1.0, 5), [], 4)
        with pytest.raises(ValueError):
            refine_grid(BandGrid.uniform(1.0, 5), [0], 1)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 40), st.integers(2, 8), st.data())
    def test_width_conservation(self, count, cz, data):
        g = BandGrid.uniform(data.draw(st.floats(0.01, 10)), count)
        active = data.draw(st.lists(st.integers(0, count - 1), min_size=1, unique=True))
        r = refine_grid(g, active, cz)
        assert r.count == cz * len(active)
        assert abs(r.widths.sum() - g.widths[active].sum()) <= 1e-12 * max(1.0, g.widths.sum())
