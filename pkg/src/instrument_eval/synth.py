"""Deterministic additive synthesis of test instruments.

These generators are the oracle side of the evaluation metrics: an
instrument whose samples share one harmonic envelope should score as
timbrally consistent, one with per-sample random envelopes should not,
and one detuned by a known amount should show exactly that pitch error.
Everything is seeded and phase-fixed, so identical profiles produce
bit-identical instruments.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AliasedHarmonics
from .instrument import Instrument, Sample, SampleMeta, format_nsynth_name, write_wav
from .pitch import midi_to_hz

MODES = ("consistent", "inconsistent", "detuned")

SYNTH_FAMILY = "synthlead"
SYNTH_SOURCE = "synthetic"

# Peak headroom so velocity-127 samples stay safely inside [-1, 1].
_HEADROOM = 0.5


@dataclass(frozen=True)
class SynthProfile:
    """Recipe for one synthetic instrument."""

    mode: str = "consistent"
    pitch_set: tuple = (48, 52, 55, 60, 64, 67, 72, 76, 79, 84)
    velocity_set: tuple = (100, 127)
    n_harmonics: int = 8
    envelope: tuple | None = None
    decay_s: float = 0.5
    detune_semitones: float = 0.0
    seed: int = 0
    duration_s: float = 1.0
    sample_rate: int = 44100
    instrument_id: int = 0
    drop_aliased: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.pitch_set or not self.velocity_set:
            raise ValueError("need at least one pitch and one velocity")
        if self.n_harmonics < 1:
            raise ValueError("need at least one harmonic")
        if self.duration_s <= 0 or self.decay_s <= 0 or self.sample_rate <= 0:
            raise ValueError("duration_s, decay_s, sample_rate must be positive")
        object.__setattr__(self, "pitch_set", tuple(sorted(self.pitch_set)))
        object.__setattr__(self, "velocity_set", tuple(sorted(self.velocity_set)))
        if self.envelope is not None:
            env = tuple(float(a) for a in self.envelope)
            if len(env) != self.n_harmonics:
                raise ValueError(
                    f"envelope length {len(env)} != n_harmonics {self.n_harmonics}"
                )
            if any(a < 0 for a in env) or not any(a > 0 for a in env):
                raise ValueError("envelope amplitudes must be >= 0 with one > 0")
            object.__setattr__(self, "envelope", env)


def _default_envelope(n_harmonics):
    """Gentle 1/h rolloff, a crude but plausible sustained-tone spectrum."""
    return 1.0 / np.arange(1, n_harmonics + 1, dtype=np.float64)


def _render_tone(f0, envelope, t, decay, sample_rate, drop_aliased):
    """Band-limited additive tone with exponential decay, peak <= _HEADROOM."""
    nyquist = sample_rate / 2.0
    harmonics = np.arange(1, envelope.size + 1, dtype=np.float64)
    keep = harmonics * f0 < nyquist
    if not np.all(keep) and not drop_aliased:
        raise AliasedHarmonics(
            f"harmonic {int(np.nonzero(~keep)[0][0]) + 1} of f0 {f0:.2f} Hz "
            f"reaches Nyquist {nyquist:.1f} Hz"
        )
    if not np.any(keep) or not np.any(envelope[keep] > 0):
        raise AliasedHarmonics(f"no audible harmonic below Nyquist for f0 {f0:.2f} Hz")
    amps = envelope[keep] / np.sum(envelope[keep])
    phases = np.outer(harmonics[keep] * (2.0 * np.pi * f0), t)
    tone = amps @ np.sin(phases)
    return _HEADROOM * tone * decay


def synth_instrument(profile, name=None):
    """Render one sample per (pitch, velocity) pair into an Instrument.

    The velocity acts as a pure linear gain velocity/127 applied last, so
    within one pitch the samples of a consistent instrument are exact
    scalings of each other. Inconsistent mode redraws the harmonic
    envelope per sample from the profile seed; detuned mode shifts every
    fundamental by detune_semitones while keeping the metadata target.
    """
    rng = np.random.default_rng(profile.seed)
    n = int(round(profile.duration_s * profile.sample_rate))
    t = np.arange(n, dtype=np.float64) / profile.sample_rate
    decay = np.exp(-t / profile.decay_s)
    base_env = (
        np.asarray(profile.envelope, dtype=np.float64)
        if profile.envelope is not None
        else _default_envelope(profile.n_harmonics)
    )

    samples = []
    for pitch in profile.pitch_set:
        f0 = midi_to_hz(pitch + (profile.detune_semitones if profile.mode == "detuned" else 0.0))
        shared_tone = None
        if profile.mode != "inconsistent":
            shared_tone = _render_tone(
                f0, base_env, t, decay, profile.sample_rate, profile.drop_aliased
            )
        for velocity in profile.velocity_set:
            if profile.mode == "inconsistent":
                env = rng.uniform(0.05, 1.0, profile.n_harmonics)
                tone = _render_tone(
                    f0, env, t, decay, profile.sample_rate, profile.drop_aliased
                )
            else:
                tone = shared_tone
            meta = SampleMeta(
                family=SYNTH_FAMILY,
                source=SYNTH_SOURCE,
                instrument_id=profile.instrument_id,
                pitch=pitch,
                velocity=velocity,
            )
            samples.append(
                Sample(meta=meta, samples=tone * (velocity / 127.0), sample_rate=profile.sample_rate)
            )
    return Instrument(name or f"{SYNTH_FAMILY}_{profile.mode}_{profile.seed:03d}", samples)


def write_instrument(inst, out_dir, subtype="pcm16", manifest=True):
    """Write an instrument as WAV files named by the NSynth grammar.

    Also drops a manifest.json sidecar (unless disabled) so loaders never
    depend on filename parsing. Returns the written WAV paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    entries = []
    for sample in inst:
        fname = format_nsynth_name(sample.meta)
        write_wav(out / fname, sample.samples, inst.sample_rate, subtype=subtype)
        paths.append(out / fname)
        entries.append(
            {
                "file": fname,
                "family": sample.meta.family,
                "source": sample.meta.source,
                "instrument_id": sample.meta.instrument_id,
                "pitch": sample.meta.pitch,
                "velocity": sample.meta.velocity,
            }
        )
    if manifest:
        (out / "manifest.json").write_text(json.dumps(entries, indent=2) + "\n")
    return paths
