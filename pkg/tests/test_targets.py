import numpy as np
import pytest

from gcikit.audio import AudioBuffer
from gcikit.lf import synth_source
from gcikit.targets import glottal_flow_target, triangle_target

FS = 16000


class TestTriangleTarget:
    def test_regular_train_construction(self):
        # GCIs every 10 ms: apex 1.0 on the mark, 0 at the half-period
        # boundary, 0.5 halfway up the ramp
        gci = np.array([0.100, 0.110, 0.120])
        curve = triangle_target(gci, int(0.25 * FS), FS)
        v = curve.values
        assert v[int(0.110 * FS)] == 1.0
        assert v[int(0.105 * FS)] == pytest.approx(0.0, abs=1e-9)
        assert v[int(0.1075 * FS)] == pytest.approx(0.5, abs=0.01)
        assert v[int(0.090 * FS)] == 0.0

    def test_empty_marks(self):
        curve = triangle_target(np.array([]), 1000, FS)
        assert np.all(curve.values == 0.0)

    def test_apex_exact_one_every_mark(self):
        rng = np.random.default_rng(0)
        gci = np.cumsum(rng.uniform(0.004, 0.012, 40)) + 0.05
        curve = triangle_target(gci, int((gci[-1] + 0.05) * FS), FS)
        for t in gci:
            assert curve.values[int(round(t * FS))] == 1.0

    def test_periodic_for_regular_train(self):
        # period-shift comparison oracle
        period_s = 0.010
        gci = 0.05 + period_s * np.arange(30)
        curve = triangle_target(gci, int(0.5 * FS), FS)
        period = int(period_s * FS)
        lo, hi = int(0.06 * FS), int(0.33 * FS)
        shifted = curve.values[lo + period:hi + period]
        ramp_quantum = 2.0 / period  # one sample of ramp slope
        assert np.abs(curve.values[lo:hi] - shifted).max() <= ramp_quantum

    def test_zero_at_half_period_boundaries(self):
        gci = np.array([0.2, 0.21, 0.22])
        curve = triangle_target(gci, int(0.4 * FS), FS)
        for bound in (0.195, 0.205, 0.215, 0.225):
            assert curve.values[int(round(bound * FS))] == pytest.approx(0.0, abs=1e-9)

    def test_wide_gap_uses_fallback_period(self):
        # 25 ms gap is not a period: the right flank of the first mark falls
        # back to the neighbor-free 10 ms period
        gci = np.array([0.1, 0.125])
        curve = triangle_target(gci, int(0.3 * FS), FS)
        # midpoint of the gap stays at zero (ramps only span 5 ms each side)
        assert curve.values[int(0.1125 * FS)] == 0.0

    def test_isolated_mark_10ms_period(self):
        curve = triangle_target(np.array([0.1]), int(0.2 * FS), FS)
        assert curve.values[int(0.1 * FS)] == 1.0
        assert curve.values[int(0.095 * FS)] == pytest.approx(0.0, abs=1e-9)
        assert curve.values[int(0.0975 * FS)] == pytest.approx(0.5, abs=0.01)

    def test_values_within_unit_interval(self):
        rng = np.random.default_rng(1)
        gci = np.cumsum(rng.uniform(0.0021, 0.019, 60)) + 0.02
        curve = triangle_target(gci, int((gci[-1] + 0.03) * FS), FS)
        assert curve.values.min() >= 0.0
        assert curve.values.max() <= 1.0

    def test_non_increasing_marks_rejected(self):
        with pytest.raises(ValueError):
            triangle_target(np.array([0.2, 0.1]), 16000, FS)

    def test_amplitude_invariance(self):
        # targets depend only on the marks, never on audio amplitude
        gci = np.array([0.05, 0.06, 0.07])
        a = triangle_target(gci, 2000, FS)
        b = triangle_target(gci, 2000, FS)
        assert np.array_equal(a.values, b.values)


def _voiced_track(f0=120.0, rd=1.0, seconds=1.0):
    n = int(seconds / 0.005)
    return synth_source(np.full(n, f0), np.full(n, rd), 0.3,
                        np.ones(n, dtype=bool), FS)


class TestGlottalFlowTarget:
    def test_single_period_normalized_to_one(self):
        track = _voiced_track()
        curve = glottal_flow_target(track.flow, track.gci, track.period_start_idx)
        starts = track.period_start_idx
        for k in range(starts.size - 1):
            seg = curve.values[starts[k]:starts[k + 1]]
            assert seg.max() == pytest.approx(1.0, abs=1e-12)

    def test_small_amplitude_still_normalized(self):
        track = _voiced_track()
        tiny = AudioBuffer(track.flow.samples * (0.02 / track.flow.samples.max()), FS)
        curve = glottal_flow_target(tiny, track.gci, track.period_start_idx)
        assert curve.values.max() == pytest.approx(1.0, abs=1e-12)

    def test_all_zero_flow(self):
        zero = AudioBuffer(np.zeros(FS), FS)
        curve = glottal_flow_target(zero, np.array([0.1]), np.array([100]))
        assert np.all(curve.values == 0.0)

    def test_derivative_minimum_at_te(self):
        # steepest descent of the normalized flow marks the closure instant
        track = _voiced_track(f0=100.0, rd=1.0)
        curve = glottal_flow_target(track.flow, track.gci, track.period_start_idx)
        d = np.diff(curve.values)
        starts = track.period_start_idx
        for k in range(1, starts.size - 1):
            s, e = starts[k], starts[k + 1]
            drop = s + np.argmin(d[s:e])
            assert abs((drop + 0.5) / FS - track.gci[k]) <= 1.5 / FS

    def test_zero_outside_voiced_periods(self):
        n = 200
        mask = np.ones(n, dtype=bool)
        mask[80:120] = False
        track = synth_source(np.full(n, 120.0), np.full(n, 1.0), 0.3, mask, FS)
        curve = glottal_flow_target(track.flow, track.gci, track.period_start_idx)
        unvoiced = slice(int(80 * 0.005 * FS), int(120 * 0.005 * FS))
        assert np.all(curve.values[unvoiced] == 0.0)

    def test_amplitude_invariance(self):
        track = _voiced_track()
        curve1 = glottal_flow_target(track.flow, track.gci, track.period_start_idx)
        scaled = AudioBuffer(track.flow.samples * 7.0, FS)
        curve2 = glottal_flow_target(scaled, track.gci, track.period_start_idx)
        assert np.abs(curve1.values - curve2.values).max() < 1e-12

    def test_negative_flow_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            glottal_flow_target(AudioBuffer(np.array([0.0, -0.1, 0.2]), FS),
                                np.array([0.0001]), np.array([0]))
