import numpy as np
import pytest

from speechcurate.audio import (
    AudioBuffer,
    AudioError,
    load_pcm,
    mixdown,
    resample,
    save_pcm,
    trim_silence,
)

from conftest import sine


class TestLoadSave:
    def test_silence_sample_count(self, tmp_path):
        buf = AudioBuffer(np.zeros(44100), 44100)
        path = tmp_path / "silence.wav"
        save_pcm(buf, path)
        loaded = load_pcm(path)
        assert loaded.sample_rate_hz == 44100
        assert loaded.num_frames == 44100
        assert np.all(loaded.samples == 0.0)

    def test_full_scale_square_quantization(self, tmp_path):
        buf = AudioBuffer(np.ones(1000), 44100)
        path = tmp_path / "square.wav"
        save_pcm(buf, path)
        loaded = load_pcm(path)
        assert np.allclose(loaded.samples, 32767 / 32768)

    def test_round_trip_within_one_lsb(self, tmp_path):
        rng = np.random.default_rng(1)
        buf = AudioBuffer(rng.uniform(-0.99, 0.99, 5000), 16000)
        path = tmp_path / "rt.wav"
        save_pcm(buf, path)
        loaded = load_pcm(path)
        assert np.max(np.abs(loaded.samples - buf.samples)) <= 1 / 32768

    def test_float32_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        buf = AudioBuffer(rng.uniform(-1, 1, 5000), 22050)
        path = tmp_path / "f32.wav"
        save_pcm(buf, path, bit_depth=32)
        loaded = load_pcm(path)
        assert np.max(np.abs(loaded.samples - buf.samples)) <= 1e-6

    def test_truncated_file_errors(self, tmp_path):
        path = tmp_path / "broken.wav"
        path.write_bytes(b"RIFF\x00\x00\x00\x00WAVE")
        with pytest.raises((AudioError, Exception)):
            load_pcm(path)


class TestMixdown:
    def test_mono_identity(self):
        buf = AudioBuffer(np.arange(10.0), 8000)
        assert mixdown(buf) is buf

    def test_opposite_channels_cancel(self):
        x = sine(440, 0.1, 8000)
        buf = AudioBuffer(np.stack([x, -x], axis=1), 8000)
        out = mixdown(buf)
        assert out.channels == 1
        assert np.allclose(out.samples, 0.0)

    def test_constant_average(self):
        buf = AudioBuffer(np.stack([np.full(100, 0.2), np.full(100, 0.6)], axis=1), 8000)
        assert np.allclose(mixdown(buf).samples, 0.4)


class TestResample:
    def test_tone_survives_48_to_44(self):
        buf = AudioBuffer(sine(1000, 2.0, 48000), 48000)
        out = resample(buf, 44100)
        assert out.sample_rate_hz == 44100
        # duration preserved within one output sample
        assert abs(out.duration_s - buf.duration_s) <= 1 / 44100
        core = out.samples[2000:-2000]
        spectrum = np.abs(np.fft.rfft(core))
        peak_hz = np.argmax(spectrum) * 44100 / len(core)
        assert abs(peak_hz - 1000) < 5
        amplitude = np.sqrt(2) * np.std(core)
        assert abs(amplitude - 1.0) <= 0.01

    def test_identity_rate_bit_identical(self):
        buf = AudioBuffer(sine(1000, 0.5, 44100), 44100)
        assert resample(buf, 44100) is buf

    def test_above_nyquist_attenuated_60db(self):
        buf = AudioBuffer(sine(23000, 2.0, 48000), 48000)
        out = resample(buf, 44100)
        rms_in = np.std(buf.samples)
        rms_out = np.std(out.samples[2000:-2000])
        assert 20 * np.log10(rms_out / rms_in + 1e-12) <= -60

    def test_round_trip_preserves_tone(self):
        buf = AudioBuffer(sine(1000, 2.0, 48000), 48000)
        back = resample(resample(buf, 44100), 48000)
        n = min(back.num_frames, buf.num_frames)
        err = np.std(back.samples[4000:n - 4000] - buf.samples[4000:n - 4000])
        assert err / np.std(buf.samples) <= 0.02

    def test_stereo_rejected(self):
        buf = AudioBuffer(np.zeros((100, 2)), 48000)
        with pytest.raises(AudioError):
            resample(buf, 44100)


def silence_tone_silence(lead_s, tone_s, tail_s, sr=16000):
    return np.concatenate([
        np.zeros(int(lead_s * sr)),
        sine(440, tone_s, sr, amplitude=0.5),
        np.zeros(int(tail_s * sr)),
    ])


class TestTrimSilence:
    HOP = 0.0125

    def test_trims_long_edges(self):
        sr = 16000
        buf = AudioBuffer(silence_tone_silence(2.0, 1.0, 2.0, sr), sr)
        result = trim_silence(buf)
        assert not result.empty_after_trim
        assert result.trimmed.duration_s == pytest.approx(2.0, abs=2 * self.HOP)
        assert result.leading_removed_s == pytest.approx(1.5, abs=2 * self.HOP)
        assert result.trailing_removed_s == pytest.approx(1.5, abs=2 * self.HOP)

    def test_no_edge_silence_is_identity(self):
        sr = 16000
        buf = AudioBuffer(sine(440, 1.0, sr, amplitude=0.5), sr)
        result = trim_silence(buf)
        assert result.leading_removed_s == 0.0
        assert result.trailing_removed_s == 0.0
        assert result.trimmed.num_frames == buf.num_frames

    def test_all_zero_flags_empty(self):
        buf = AudioBuffer(np.zeros(16000), 16000)
        result = trim_silence(buf)
        assert result.empty_after_trim
        assert result.trimmed.num_frames == 0

    def test_durations_conserved(self):
        sr = 16000
        buf = AudioBuffer(silence_tone_silence(1.3, 0.8, 0.9, sr), sr)
        result = trim_silence(buf)
        total = (result.trimmed.duration_s + result.leading_removed_s
                 + result.trailing_removed_s)
        assert total == pytest.approx(buf.duration_s, abs=self.HOP)

    def test_idempotent_within_one_hop(self):
        sr = 16000
        buf = AudioBuffer(silence_tone_silence(1.0, 1.0, 1.0, sr), sr)
        once = trim_silence(buf).trimmed
        twice = trim_silence(once)
        removed = twice.leading_removed_s + twice.trailing_removed_s
        assert removed <= self.HOP + 1e-9

    def test_never_removes_active_audio(self):
        sr = 16000
        buf = AudioBuffer(silence_tone_silence(0.7, 1.1, 0.4, sr), sr)
        result = trim_silence(buf)
        # the tone spans [0.7, 1.8]; kept span must cover it
        start = result.leading_removed_s
        end = buf.duration_s - result.trailing_removed_s
        assert start <= 0.7 + 1e-9
        assert end >= 1.8 - 1e-9
