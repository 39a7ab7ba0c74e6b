import numpy as np
import pytest

from gcikit.audio import AudioBuffer, normalize_peak
from gcikit.corpus import UtteranceSpec, synth_utterance
from gcikit.model import (ArchConfig, DetectConfig, LayerSpec, build_model, detect,
                          load_weights, marks_from_curve, predict_curve, save_weights)

FS = 16000


class TestArchConfig:
    def test_paper_layout_lengths(self):
        arch = ArchConfig.paper()
        assert [l.filters for l in arch.layers] == [512, 64, 64, 256, 512, 1024, 1]
        assert arch.layer_lengths(993) == [962, 481, 450, 225, 194, 97, 66, 35, 4, 1]
        assert arch.receptive_field == 993
        assert arch.decimation == 8

    def test_small_layout_same_lengths(self):
        arch = ArchConfig.small()
        assert [l.filters for l in arch.layers] == [128, 16, 16, 64, 128, 256, 1]
        assert arch.layer_lengths(993) == [962, 481, 450, 225, 194, 97, 66, 35, 4, 1]

    def test_kernel3_layout_rejected_at_build(self):
        arch = ArchConfig.from_filters((8, 8, 8, 8, 8, 8, 1),
                                       kernels=(3, 3, 3, 3, 3, 3, 3))
        assert arch.receptive_field != 993
        with pytest.raises(ValueError, match="receptive field"):
            build_model(arch)

    def test_layer_count_enforced(self):
        with pytest.raises(ValueError, match="7 layers"):
            ArchConfig(layers=tuple(
                LayerSpec(8, 32, i < 3, "relu") for i in range(6)))

    def test_last_layer_single_filter(self):
        with pytest.raises(ValueError, match="1 filter"):
            ArchConfig.from_filters((8, 8, 8, 8, 8, 8, 2))


@pytest.fixture(scope="module")
def tiny_model():
    return build_model(ArchConfig.from_filters((16, 8, 8, 16, 16, 32, 1)), seed=3)


@pytest.fixture(scope="module")
def voiced_utterance():
    spec = UtteranceSpec(seed=21, duration_s=2.0, f0_base=140.0,
                         formants=((600, 80), (1300, 110), (2700, 140)),
                         rd_shift=0.0, noise_gain=0.03)
    return synth_utterance(spec)


class TestPredictCurve:
    def test_silence_gives_constant(self, tiny_model):
        curve = predict_curve(tiny_model, AudioBuffer(np.zeros(FS), FS))
        assert np.abs(curve - curve[0]).max() < 1e-6

    def test_one_second_curve_length(self, tiny_model):
        curve = predict_curve(tiny_model, AudioBuffer(np.zeros(FS), FS))
        assert abs(curve.size - 2000) <= 1

    def test_length_formula(self, tiny_model):
        for n in (993, 1000, 16000, 12345):
            curve = predict_curve(tiny_model, AudioBuffer(np.zeros(n), FS))
            assert curve.size == (n - 1) // 8 + 1

    def test_sliding_window_equivalence(self, tiny_model):
        rng = np.random.default_rng(4)
        audio = rng.standard_normal(4000) * 0.2
        curve = predict_curve(tiny_model, AudioBuffer(audio, FS))
        half = 496
        padded = np.pad(audio, (half, half))
        for i in rng.choice(curve.size, size=20, replace=False):
            window = padded[8 * i:8 * i + 993].astype(np.float32).reshape(1, 993, 1)
            y, _ = tiny_model.forward(window, train=False)
            assert abs(float(y[0, 0, 0]) - curve[i]) < 1e-5

    def test_shift_by_8_shifts_curve_by_1(self, tiny_model):
        rng = np.random.default_rng(5)
        audio = rng.standard_normal(4000) * 0.2
        c0 = predict_curve(tiny_model, AudioBuffer(audio, FS))
        c1 = predict_curve(tiny_model, AudioBuffer(np.r_[np.zeros(8), audio], FS))
        interior = slice(80, c0.size - 80)
        assert np.abs(c0[interior] - c1[interior.start + 1:interior.stop + 1]).max() < 1e-5

    def test_wrong_rate_rejected(self, tiny_model):
        with pytest.raises(ValueError, match="16 kHz"):
            predict_curve(tiny_model, AudioBuffer(np.zeros(8000), 8000))


class TestDetect:
    def test_oracle_triangle_curve(self, voiced_utterance):
        audio, truth = voiced_utterance
        cfg = DetectConfig(target_kind="triangle")
        marks = marks_from_curve(truth.triangle.values[::8], cfg,
                                 duration=audio.duration)
        errs = np.array([np.abs(marks - t).min() for t in truth.gci])
        assert errs.max() <= 0.0005
        assert marks.size == truth.gci.size

    def test_oracle_glottal_flow_curve(self, voiced_utterance):
        audio, truth = voiced_utterance
        cfg = DetectConfig(target_kind="glottal_flow")
        marks = marks_from_curve(truth.glottal_flow.values[::8], cfg,
                                 duration=audio.duration)
        errs = np.array([np.abs(marks - t).min() for t in truth.gci])
        assert errs.max() <= 0.0005

    def test_all_zero_curve(self):
        for kind in ("triangle", "glottal_flow"):
            marks = marks_from_curve(np.zeros(500), DetectConfig(target_kind=kind))
            assert marks.size == 0

    def test_detect_spacing_and_range(self, tiny_model, voiced_utterance):
        audio, _ = voiced_utterance
        marks = detect(tiny_model, audio, DetectConfig())
        if marks.size > 1:
            assert np.all(np.diff(marks) >= 0.002 - 1e-12)
        if marks.size:
            assert marks.min() >= 0 and marks.max() < audio.duration

    def test_amplitude_robustness_after_normalization(self, tiny_model, voiced_utterance):
        audio, _ = voiced_utterance
        cfg = DetectConfig()
        base = detect(tiny_model, normalize_peak(audio, -3.0), cfg)
        scaled = detect(tiny_model,
                        normalize_peak(AudioBuffer(audio.samples * 0.05, FS), -3.0), cfg)
        assert np.array_equal(base, scaled)

    def test_bad_threshold_rejected(self):
        with pytest.raises(ValueError):
            DetectConfig(tri_threshold=1.5)


class TestWeightSerialization:
    def test_round_trip_bit_exact(self, tiny_model, tmp_path):
        path = tmp_path / "m.fcng"
        save_weights(tiny_model, str(path))
        loaded = load_weights(str(path))
        again = tmp_path / "m2.fcng"
        save_weights(loaded, str(again))
        assert path.read_bytes() == again.read_bytes()
        for a, b in zip(tiny_model.layers, loaded.layers):
            assert np.array_equal(a.w.astype(np.float32), b.w)
            assert np.array_equal(a.bn.running_var.astype(np.float32), b.bn.running_var)

    def test_magic_validation(self, tmp_path):
        path = tmp_path / "bad.fcng"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError, match="FCNG"):
            load_weights(str(path))

    def test_truncated_file(self, tiny_model, tmp_path):
        path = tmp_path / "m.fcng"
        save_weights(tiny_model, str(path))
        blob = path.read_bytes()
        (tmp_path / "trunc.fcng").write_bytes(blob[:len(blob) // 2])
        with pytest.raises(ValueError, match="truncated|corrupt"):
            load_weights(str(tmp_path / "trunc.fcng"))

    def test_inference_identical_after_round_trip(self, tiny_model, tmp_path):
        rng = np.random.default_rng(6)
        audio = AudioBuffer(rng.standard_normal(3000) * 0.2, FS)
        before = predict_curve(tiny_model, audio)
        path = tmp_path / "m.fcng"
        save_weights(tiny_model, str(path))
        after = predict_curve(load_weights(str(path)), audio)
        assert np.array_equal(before, after)

    def test_forward_determinism(self, tiny_model):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((4, 993, 1)).astype(np.float32)
        y1, _ = tiny_model.forward(x, train=False)
        y2, _ = tiny_model.forward(x.copy(), train=False)
        assert np.array_equal(y1, y2)
