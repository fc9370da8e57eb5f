"""YIN fundamental-frequency estimation and instrument-level pitch accuracy.

Per frame, YIN computes a squared difference function over candidate
lags, normalizes it by its cumulative mean (so the result is
scale-invariant and starts at 1), and takes the first dip under an
absolute threshold as the period estimate, refined by parabolic
interpolation. A frame with no dip is unvoiced.

An instrument's pitch report reduces each sample to the median of its
voiced frames, converts to fractional MIDI semitones, and aggregates the
absolute deviation from the labeled target pitch (MAD).
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import AllUnvoiced, NonPositiveFrequency, TooShort

MAD_MODES = ("mean_abs", "median_abs")


@dataclass(frozen=True)
class YinConfig:
    """YIN parameters. Defaults cover MIDI 21-108 at 44.1 kHz with margin."""

    frame_size: int = 4096
    hop_size: int = 1024
    threshold: float = 0.10
    f_min: float = 25.0
    f_max: float = 4400.0

    def __post_init__(self):
        if self.frame_size < 4:
            raise ValueError(f"frame_size {self.frame_size} too small")
        if self.hop_size < 1:
            raise ValueError(f"hop_size {self.hop_size} must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold {self.threshold} outside (0, 1)")
        if not 0.0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max")

    def check_rate(self, sample_rate):
        if self.f_max >= sample_rate / 2.0:
            raise ValueError(
                f"f_max {self.f_max} Hz not below Nyquist for rate {sample_rate}"
            )
        if self.frame_size < 2.0 * sample_rate / self.f_min:
            raise ValueError(
                f"frame_size {self.frame_size} holds fewer than two periods of "
                f"f_min {self.f_min} Hz at rate {sample_rate}"
            )


@dataclass(frozen=True)
class PitchEntry:
    """Per-sample result: median f0 and deviation from the target pitch."""

    pitch: int
    velocity: int
    f0_hz: float | None
    midi_est: float | None
    deviation: float | None


@dataclass(frozen=True)
class PitchReport:
    per_sample: list
    mad: float
    mode: str
    voiced: int
    unvoiced: int

    def to_json_dict(self):
        return {
            "mad": self.mad,
            "mode": self.mode,
            "voiced": self.voiced,
            "unvoiced": self.unvoiced,
            "per_sample": [
                {
                    "pitch": e.pitch,
                    "velocity": e.velocity,
                    "f0_hz": e.f0_hz,
                    "midi_est": e.midi_est,
                    "deviation": e.deviation,
                }
                for e in self.per_sample
            ],
        }


def hz_to_midi(f0):
    """Equal-temperament MIDI note for a frequency (A4 = 440 Hz = 69)."""
    if f0 <= 0:
        raise NonPositiveFrequency(f"frequency {f0} Hz has no MIDI note")
    return float(69.0 + 12.0 * np.log2(f0 / 440.0))


def midi_to_hz(note):
    return 440.0 * 2.0 ** ((note - 69.0) / 12.0)


def _difference_function(frames, w2):
    """Squared difference d[t, tau] for tau in [0, w2] over a fixed window.

    d(tau) = sum_{j<w2} (x[j] - x[j+tau])^2, expanded into two energy
    terms and a cross-correlation computed with one FFT per frame.
    """
    n_frames, frame_size = frames.shape
    nfft = 1 << int(np.ceil(np.log2(frame_size + w2 + 1)))
    spec_full = np.fft.rfft(frames, nfft, axis=1)
    spec_win = np.fft.rfft(frames[:, :w2], nfft, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_win), nfft, axis=1)[:, : w2 + 1]

    csum = np.zeros((n_frames, frame_size + 1))
    np.cumsum(frames**2, axis=1, out=csum[:, 1:])
    energy = csum[:, w2 : 2 * w2 + 1] - csum[:, : w2 + 1]
    d = energy[:, :1] + energy - 2.0 * corr
    return np.maximum(d, 0.0)


def _cmndf(d):
    """Cumulative-mean-normalized difference, with d'(0) = 1 by definition."""
    n_frames, n_lags = d.shape
    taus = np.arange(1, n_lags, dtype=np.float64)
    csum = np.cumsum(d[:, 1:], axis=1)
    out = np.ones_like(d)
    nonzero = csum > 0.0
    np.divide(d[:, 1:] * taus, csum, out=out[:, 1:], where=nonzero)
    return out


def yin_f0(x, sample_rate, cfg=None):
    """Per-frame f0 estimates in Hz; unvoiced frames are NaN."""
    cfg = cfg or YinConfig()
    cfg.check_rate(sample_rate)
    x = np.asarray(x, dtype=np.float64)
    if x.size < cfg.frame_size:
        raise TooShort(
            f"waveform of {x.size} samples shorter than frame_size {cfg.frame_size}"
        )
    frames = sliding_window_view(x, cfg.frame_size)[:: cfg.hop_size]
    w2 = cfg.frame_size // 2
    dprime = _cmndf(_difference_function(frames, w2))

    tau_min = max(2, int(np.ceil(sample_rate / cfg.f_max)))
    tau_max = min(w2 - 1, int(np.floor(sample_rate / cfg.f_min)))

    f0 = np.full(frames.shape[0], np.nan)
    for t in range(frames.shape[0]):
        row = dprime[t]
        below = np.nonzero(row[tau_min : tau_max + 1] < cfg.threshold)[0]
        if below.size == 0:
            continue
        tau = tau_min + int(below[0])
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
        y1, y2, y3 = row[tau - 1], row[tau], row[tau + 1]
        denom = y1 - 2.0 * y2 + y3
        delta = 0.0
        if denom > 0.0:
            delta = 0.5 * (y1 - y3) / denom
            delta = float(np.clip(delta, -1.0, 1.0))
        f0[t] = sample_rate / (tau + delta)
    return f0


def median_pitch(frame_f0):
    """Median over voiced frames; None when every frame is unvoiced."""
    frame_f0 = np.asarray(frame_f0, dtype=np.float64)
    voiced = frame_f0[~np.isnan(frame_f0)]
    if voiced.size == 0:
        return None
    return float(np.median(voiced))


def mad_report(inst, cfg=None, mode="mean_abs", threads=None):
    """Pitch-accuracy report for an instrument.

    Each sample contributes |median-pitch estimate - target| in
    semitones; mad aggregates with the mean (default) or median.
    Unvoiced samples are excluded from mad and counted separately.
    """
    cfg = cfg or YinConfig()
    if mode not in MAD_MODES:
        raise ValueError(f"mode must be one of {MAD_MODES}")
    if threads is None:
        threads = os.cpu_count() or 1
    keys = sorted(inst.keys())

    def estimate(key):
        return median_pitch(yin_f0(inst[key].samples, inst.sample_rate, cfg))

    if threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            medians = list(pool.map(estimate, keys))
    else:
        medians = [estimate(k) for k in keys]

    entries = []
    deviations = []
    for key, f0 in zip(keys, medians):
        pitch, velocity = key
        if f0 is None:
            entries.append(PitchEntry(pitch, velocity, None, None, None))
            continue
        midi_est = float(hz_to_midi(f0))
        deviation = midi_est - pitch
        deviations.append(abs(deviation))
        entries.append(PitchEntry(pitch, velocity, f0, midi_est, deviation))

    if not deviations:
        raise AllUnvoiced(f"no voiced sample among {len(keys)}")
    if mode == "mean_abs":
        mad = float(np.mean(deviations))
    else:
        mad = float(np.median(deviations))
    return PitchReport(
        per_sample=entries,
        mad=mad,
        mode=mode,
        voiced=len(deviations),
        unvoiced=len(keys) - len(deviations),
    )
