"""Spectral bandwidth estimation and subset bandwidth gates.

The effective bandwidth of a recording is the highest frequency whose mean
spectral power is within a threshold (default -50 dB) of the spectral peak.
Upsampled low-bandwidth recordings are detected because their content above
the original Nyquist falls far below that threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, load_pcm, mixdown
from .manifest import ChapterRecord, SubsetSpec, UtteranceRecord

DEFAULT_THRESHOLD_DB = -50.0
DEFAULT_ANALYSIS_S = 30.0
# 2048-point frames at 44.1 kHz: ~21.5 Hz bins, fine enough for the
# 11/13 kHz subset gates. Blackman window keeps spectral leakage past a
# band edge under 3 bins at the -50 dB criterion.
DEFAULT_WINDOW_S = 2048 / 44100
DEFAULT_HOP_S = 1024 / 44100


class BandwidthError(Exception):
    pass


@dataclass(frozen=True)
class PowerSpectrum:
    psd: np.ndarray
    bin_hz: float
    nyquist_hz: float


@dataclass(frozen=True)
class BandwidthEstimate:
    f_max_hz: float
    peak_power: float
    threshold_db: float = DEFAULT_THRESHOLD_DB
    analyzed_s: float = DEFAULT_ANALYSIS_S
    degenerate: bool = False


def mean_power_spectrum(
    buf: AudioBuffer,
    window_s: float = DEFAULT_WINDOW_S,
    hop_s: float = DEFAULT_HOP_S,
) -> PowerSpectrum:
    """Magnitude-squared FFT per frame, averaged over frames. DC bin included."""
    if buf.channels != 1:
        raise BandwidthError("mean_power_spectrum expects a mono buffer")
    sr = buf.sample_rate_hz
    n_fft = max(2, int(round(window_s * sr)))
    hop = max(1, int(round(hop_s * sr)))
    x = buf.samples
    if len(x) < n_fft:
        raise BandwidthError(
            f"buffer of {len(x)} samples is shorter than one {n_fft}-sample window"
        )
    n_frames = (len(x) - n_fft) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop][:n_frames]
    window = np.blackman(n_fft)
    psd = (np.abs(np.fft.rfft(frames * window, axis=1)) ** 2).mean(axis=0)
    return PowerSpectrum(psd=psd, bin_hz=sr / n_fft, nyquist_hz=sr / 2.0)


def estimate_bandwidth(
    spec: PowerSpectrum, threshold_db: float = DEFAULT_THRESHOLD_DB
) -> BandwidthEstimate:
    """Highest bin whose power is within threshold_db of the spectral peak."""
    peak = float(spec.psd.max()) if len(spec.psd) else 0.0
    if peak <= 0.0:
        return BandwidthEstimate(
            f_max_hz=0.0, peak_power=0.0, threshold_db=threshold_db, degenerate=True
        )
    admitted = np.nonzero(spec.psd >= peak * 10.0 ** (threshold_db / 10.0))[0]
    f_max = float(admitted[-1] * spec.bin_hz)
    return BandwidthEstimate(f_max_hz=min(f_max, spec.nyquist_hz),
                             peak_power=peak, threshold_db=threshold_db)


def chapter_bandwidth(
    chapter: ChapterRecord,
    audio_root: str | Path = ".",
    analyze_s: float = DEFAULT_ANALYSIS_S,
    threshold_db: float = DEFAULT_THRESHOLD_DB,
) -> BandwidthEstimate:
    """Estimate bandwidth on the head of a chapter file, pre-trim, post-mixdown.

    Uses the first analyze_s seconds (the whole file when shorter). The result
    is inherited by every utterance of the chapter.
    """
    path = Path(audio_root) / chapter.audio_path
    buf = mixdown(load_pcm(path))
    head = buf.samples[: int(round(analyze_s * buf.sample_rate_hz))]
    spec = mean_power_spectrum(AudioBuffer(samples=head, sample_rate_hz=buf.sample_rate_hz))
    est = estimate_bandwidth(spec, threshold_db=threshold_db)
    analyzed = len(head) / buf.sample_rate_hz
    return BandwidthEstimate(
        f_max_hz=est.f_max_hz,
        peak_power=est.peak_power,
        threshold_db=threshold_db,
        analyzed_s=analyzed,
        degenerate=est.degenerate,
    )


def passes_bandwidth_gate(rec: UtteranceRecord, spec: SubsetSpec) -> bool:
    """True iff the record's bandwidth meets the subset minimum (inclusive)."""
    if rec.bandwidth_hz is None:
        raise BandwidthError(
            f"{rec.utterance_id}: bandwidth_hz missing; run bandwidth estimation first"
        )
    return rec.bandwidth_hz >= spec.min_bandwidth_hz
