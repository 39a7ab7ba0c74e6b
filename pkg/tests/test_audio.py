import numpy as np
import pytest

from gcikit.audio import (AudioBuffer, normalize_peak, read_marks, read_wav,
                          write_marks, write_wav, write_wav_float32)


class TestAudioBuffer:
    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="NaN"):
            AudioBuffer(np.array([0.0, np.nan]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError, match="sample_rate"):
            AudioBuffer(np.zeros(4), 0)

    def test_time_axis(self):
        buf = AudioBuffer(np.zeros(4), 8000)
        assert np.allclose(buf.times(), [0, 1 / 8000, 2 / 8000, 3 / 8000])


class TestWavRoundTrip:
    def test_zero_file(self, tmp_path):
        path = tmp_path / "z.wav"
        write_wav(path, AudioBuffer(np.zeros(16000), 16000))
        (ch,) = read_wav(path)
        assert len(ch) == 16000
        assert ch.sample_rate == 16000
        assert np.all(ch.samples == 0.0)

    def test_int16_full_scale_negative(self, tmp_path):
        import scipy.io.wavfile as wavfile
        path = tmp_path / "fs.wav"
        wavfile.write(path, 16000, np.array([-32768, 0, 16384], dtype=np.int16))
        (ch,) = read_wav(path)
        assert ch.samples[0] == -1.0
        assert ch.samples[1] == 0.0
        assert ch.samples[2] == 0.5

    def test_two_channel(self, tmp_path):
        path = tmp_path / "2ch.wav"
        speech = AudioBuffer(np.sin(2 * np.pi * 100 * np.arange(800) / 16000) * 0.4, 16000)
        egg = AudioBuffer(np.cos(2 * np.pi * 100 * np.arange(800) / 16000) * 0.3, 16000)
        write_wav(path, [speech, egg])
        channels = read_wav(path)
        assert len(channels) == 2
        assert len(channels[0]) == len(channels[1]) == 800
        assert channels[0].sample_rate == channels[1].sample_rate == 16000
        assert np.abs(channels[0].samples - speech.samples).max() <= 1 / 32768
        assert np.abs(channels[1].samples - egg.samples).max() <= 1 / 32768

    def test_sinusoid_quantization_bound(self, tmp_path):
        path = tmp_path / "sine.wav"
        t = np.arange(16000) / 16000
        sig = 0.5 * np.sin(2 * np.pi * 440 * t)
        write_wav(path, AudioBuffer(sig, 16000))
        (ch,) = read_wav(path)
        assert np.abs(ch.samples - sig).max() <= 1 / 32768

    def test_clipping(self, tmp_path):
        import scipy.io.wavfile as wavfile
        path = tmp_path / "clip.wav"
        write_wav(path, AudioBuffer(np.array([1.5, -2.0, 0.0]), 16000))
        _, raw = wavfile.read(path)
        assert raw[0] == 32767
        assert raw[1] == -32768

    def test_empty_channel_list(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            write_wav(tmp_path / "x.wav", [])

    def test_mismatched_lengths(self, tmp_path):
        with pytest.raises(ValueError, match="mismatched"):
            write_wav(tmp_path / "x.wav",
                      [AudioBuffer(np.zeros(10), 16000), AudioBuffer(np.zeros(9), 16000)])

    def test_float32_lossless(self, tmp_path):
        path = tmp_path / "f32.wav"
        values = np.random.default_rng(0).random(500)
        write_wav_float32(path, AudioBuffer(values, 16000))
        (ch,) = read_wav(path)
        assert np.array_equal(ch.samples, values.astype(np.float32).astype(np.float64))


class TestNormalizePeak:
    def test_minus_3db(self):
        buf = AudioBuffer(np.array([0.1, -0.2, 0.05]), 16000)
        out = normalize_peak(buf, -3.0)
        assert np.abs(out.samples).max() == pytest.approx(10 ** (-3 / 20), abs=1e-12)
        # shape preserved: output is input times a positive scalar
        assert np.allclose(out.samples / buf.samples, out.samples[0] / buf.samples[0])

    def test_identity_when_already_at_level(self):
        target = 10 ** (-3 / 20)
        buf = AudioBuffer(np.array([target, -target / 2]), 16000)
        out = normalize_peak(buf, -3.0)
        assert np.allclose(out.samples, buf.samples, atol=1e-15)

    def test_zero_db(self):
        out = normalize_peak(AudioBuffer(np.array([0.3, -0.1]), 16000), 0.0)
        assert np.abs(out.samples).max() == pytest.approx(1.0, abs=1e-12)

    def test_all_zero_errors(self):
        with pytest.raises(ValueError):
            normalize_peak(AudioBuffer(np.zeros(8), 16000), -3.0)

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            buf = AudioBuffer(rng.standard_normal(100), 16000)
            once = normalize_peak(buf, -3.0)
            twice = normalize_peak(once, -3.0)
            assert np.abs(twice.samples - once.samples).max() < 1e-12


class TestMarkerFiles:
    def test_round_trip_fixed_decimals(self, tmp_path):
        path = tmp_path / "m.gci.txt"
        marks = np.array([0.012345678, 0.5, 1.25])
        write_marks(path, marks)
        text = path.read_text()
        assert text == "0.012346\n0.500000\n1.250000\n"
        back = read_marks(path)
        assert np.abs(back - marks).max() < 1e-6

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("# header\n0.100000\n\n0.200000\n")
        assert np.allclose(read_marks(path), [0.1, 0.2])

    def test_non_increasing_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0.2\n0.1\n")
        with pytest.raises(ValueError, match="increasing"):
            read_marks(path)
        with pytest.raises(ValueError, match="increasing"):
            write_marks(tmp_path / "w.txt", np.array([0.2, 0.1]))
