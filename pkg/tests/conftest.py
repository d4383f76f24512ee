import numpy as np
import pytest

from speechcurate.audio import AudioBuffer


def sine(freq_hz, duration_s, sr, amplitude=1.0):
    t = np.arange(int(round(duration_s * sr))) / sr
    return amplitude * np.sin(2 * np.pi * freq_hz * t)


def lowpassed_noise(cutoff_hz, duration_s, sr, seed=0):
    """White noise brick-walled by zeroing FFT bins above the cutoff."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(round(duration_s * sr)))
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), 1.0 / sr)
    spectrum[freqs > cutoff_hz] = 0.0
    return np.fft.irfft(spectrum, len(x))


@pytest.fixture
def mono_buffer():
    def build(samples, sr=44100):
        return AudioBuffer(samples=np.asarray(samples, dtype=np.float64), sample_rate_hz=sr)

    return build
