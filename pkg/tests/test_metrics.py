import numpy as np
import pytest

from gcikit.metrics import EvalMode, aggregate, cycle_windows, evaluate, format_table

VR = EvalMode(variant="voiced_restricted")
ALL = EvalMode(variant="all_gcis")


def brute_force(ref, det, mode):
    """Independent O(n^2) scorer: explicit windows, loop membership tests."""
    ref = np.sort(np.asarray(ref, float))
    det = np.sort(np.asarray(det, float))
    windows = []
    for i, t in enumerate(ref):
        lg = t - ref[i - 1] if i > 0 else None
        rg = ref[i + 1] - t if i + 1 < len(ref) else None
        if mode.variant == "voiced_restricted":
            if lg is None or rg is None or not (0.002 <= lg <= 0.020) or not (0.002 <= rg <= 0.020):
                continue
        hl = lg / 2 if lg is not None else min([v for v in (rg, 0.010) if v is not None])
        hr = rg / 2 if rg is not None else min([v for v in (lg, 0.010) if v is not None])
        windows.append((t, t - hl, t + hr))
    ni = nm = nmulti = 0
    errors = []
    for center, lo, hi in windows:
        inside = [d for d in det if lo <= d < hi]
        if len(inside) == 1:
            ni += 1
            errors.append(inside[0] - center)
        elif len(inside) == 0:
            nm += 1
        else:
            nmulti += 1
    if mode.variant == "voiced_restricted":
        nf = nmulti
    else:
        nf = len(det) - ni
    return len(windows), ni, nm, nf, errors


class TestCycleWindows:
    def test_regular_train_keeps_middle(self):
        ref = 0.1 + 0.010 * np.arange(5)
        vr = cycle_windows(ref, VR)
        assert [w.kept for w in vr] == [False, True, True, True, False]
        al = cycle_windows(ref, ALL)
        assert all(w.kept for w in al)

    def test_isolated_mark(self):
        vr = cycle_windows(np.array([0.5]), VR)
        assert not vr[0].kept
        al = cycle_windows(np.array([0.5]), ALL)
        assert al[0].kept
        assert al[0].start == pytest.approx(0.49)
        assert al[0].end == pytest.approx(0.51)

    def test_wide_gap_drops_mark_in_restricted(self):
        ref = np.array([0.1, 0.110, 0.135])  # 10 ms then 25 ms
        vr = cycle_windows(ref, VR)
        assert not vr[1].kept

    def test_windows_never_overlap(self):
        rng = np.random.default_rng(0)
        for mode in (VR, ALL):
            for _ in range(50):
                ref = np.cumsum(rng.uniform(0.001, 0.04, 20))
                ws = cycle_windows(ref, mode)
                for a, b in zip(ws, ws[1:]):
                    assert a.end <= b.start + 1e-12

    def test_boundary_half_window_capped(self):
        ref = np.array([0.1, 0.125])  # 25 ms gap
        al = cycle_windows(ref, ALL)
        assert al[0].start == pytest.approx(0.1 - 0.010)  # min(gap, 10 ms)
        ref2 = np.array([0.1, 0.108])
        al2 = cycle_windows(ref2, ALL)
        assert al2[0].start == pytest.approx(0.1 - 0.008)


class TestEvaluate:
    def test_perfect_detection_both_modes(self):
        ref = np.array([0.10, 0.11, 0.12, 0.13, 0.14])
        for mode in (VR, ALL):
            r = evaluate(ref, ref.copy(), mode)
            assert (r.idr, r.mr, r.far, r.ida) == (100.0, 0.0, 0.0, 0.0)

    def test_constant_offset_has_zero_std(self):
        ref = np.array([0.10, 0.11, 0.12, 0.13, 0.14])
        r = evaluate(ref, ref + 0.0005, VR)
        assert r.idr == 100.0
        assert r.ida == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(r.errors, 0.0005)

    def test_one_hit_one_double_one_miss(self):
        # five refs -> middle three kept; hits: 1 in c1, 2 in c2, 0 in c3
        ref = np.array([0.10, 0.11, 0.12, 0.13, 0.14])
        det = np.array([0.110, 0.1185, 0.1215])
        r = evaluate(ref, det, VR)
        n, ni, nm, nf, errs = brute_force(ref, det, VR)
        assert (r.n_identified, r.n_missed, r.n_false) == (ni, nm, nf) == (1, 1, 1)
        assert r.idr == pytest.approx(100 / 3)
        assert r.mr == pytest.approx(100 / 3)
        assert r.far == pytest.approx(100 / 3)

    def test_strays_in_all_gcis_mode(self):
        ref = 0.1 + 0.010 * np.arange(10)
        strays = np.array([0.5, 0.6, 0.7, 0.8, 0.9])
        det = np.sort(np.r_[ref, strays])
        r = evaluate(ref, det, ALL)
        assert r.idr == 100.0
        assert r.mr == 0.0
        assert r.far == pytest.approx(50.0)

    def test_far_can_exceed_100_in_all_mode(self):
        ref = np.array([0.1, 0.11])
        det = np.sort(np.r_[ref, 0.3 + 0.01 * np.arange(5)])
        r = evaluate(ref, det, ALL)
        assert r.far > 100.0

    def test_empty_ref_rejected(self):
        with pytest.raises(ValueError):
            evaluate(np.array([]), np.array([0.1]), ALL)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        ref = np.cumsum(rng.uniform(0.004, 0.012, 15))
        det = rng.permutation(np.cumsum(rng.uniform(0.002, 0.03, 12)))
        for mode in (VR, ALL):
            a = evaluate(ref, np.sort(det), mode)
            b = evaluate(ref, det, mode)
            assert a.to_dict() == b.to_dict()

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        ref = np.cumsum(rng.uniform(0.004, 0.012, 15))
        det = ref + rng.normal(0, 0.0005, 15)
        for mode in (VR, ALL):
            a = evaluate(ref, det, mode)
            b = evaluate(ref + 1.7, det + 1.7, mode)
            assert a.idr == b.idr and a.far == b.far
            assert a.ida == pytest.approx(b.ida, abs=1e-9)

    def test_rates_partition_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            ref = np.cumsum(rng.uniform(0.003, 0.015, rng.integers(3, 30)))
            det = np.cumsum(rng.uniform(0.002, 0.02, rng.integers(0, 30)))
            try:
                r = evaluate(ref, det, VR)
            except ValueError:
                continue
            assert r.n_identified + r.n_missed + r.n_false == r.n_ref
            assert r.idr + r.mr + r.far == pytest.approx(100.0, abs=1e-9)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        checked = 0
        for _ in range(500):
            n_ref = int(rng.integers(2, 50))
            ref = np.cumsum(rng.uniform(0.001, 0.030, n_ref)) + 0.05
            n_det = int(rng.integers(0, 60))
            det = np.sort(rng.uniform(0.0, ref[-1] + 0.05, n_det))
            for mode in (VR, ALL):
                expected = brute_force(ref, det, mode)
                if expected[0] == 0:
                    with pytest.raises(ValueError):
                        evaluate(ref, det, mode)
                    continue
                r = evaluate(ref, det, mode)
                assert (r.n_ref, r.n_identified, r.n_missed, r.n_false) == expected[:4]
                assert np.allclose(sorted(r.errors), sorted(expected[4]))
                checked += 1
        assert checked > 500


class TestAggregate:
    def test_single_report_identity(self):
        ref = 0.1 + 0.010 * np.arange(6)
        r = evaluate(ref, ref, VR)
        agg = aggregate([r])
        assert agg.to_dict() == r.to_dict()

    def test_pooled_rates(self):
        ref = 0.1 + 0.010 * np.arange(12)  # 10 kept cycles
        hit = evaluate(ref, ref, VR)
        miss = evaluate(ref, np.array([5.0]), VR)
        agg = aggregate([hit, miss])
        assert agg.idr == pytest.approx(50.0)
        assert agg.n_ref == 20

    def test_pooled_ida_uses_concatenated_errors(self):
        ref = 0.1 + 0.010 * np.arange(7)
        a = evaluate(ref, ref + 0.0004, VR)
        b = evaluate(ref, ref - 0.0004, VR)
        agg = aggregate([a, b])
        pooled = np.std(np.r_[a.errors, b.errors]) * 1000
        assert agg.ida == pytest.approx(pooled, abs=1e-12)
        assert agg.ida > 0  # not the mean of the two zero stds

    def test_mixed_variants_rejected(self):
        ref = 0.1 + 0.010 * np.arange(6)
        with pytest.raises(ValueError):
            aggregate([evaluate(ref, ref, VR), evaluate(ref, ref, ALL)])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])


def test_format_table():
    ref = 0.1 + 0.010 * np.arange(6)
    table = format_table({"run": evaluate(ref, ref, VR)})
    lines = table.splitlines()
    assert "IDR" in lines[0] and "IDA" in lines[0]
    assert "100.00" in lines[1]
