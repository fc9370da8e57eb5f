"""Instrument/sample data model, NSynth-style filename parsing, and WAV ingestion.

An instrument is an immutable ensemble of mono waveforms keyed by
(pitch, velocity). All members share one sample rate and one length, so
downstream pairwise feature comparisons are always well defined. Length
conformance happens here, at ingestion, via an explicit policy.
"""

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ChannelError,
    CorruptFile,
    DuplicateKey,
    EmptyInstrument,
    MalformedName,
    OutOfRange,
    RateMismatch,
    UnsupportedFormat,
)

SOURCES = ("acoustic", "electronic", "synthetic")

# 88-key keyboard grid and the five velocity layers used by NSynth-style corpora.
GRID_PITCH_MIN = 21
GRID_PITCH_MAX = 108
GRID_VELOCITIES = (25, 50, 75, 100, 127)

# Length-conformance policies for load_instrument.
PAD_TO_MAX = "pad"
TRUNCATE_TO_MIN = "truncate"
FIXED_DURATION = "fixed"

_NAME_RE = re.compile(
    r"^(?P<family>[a-z_]+)_(?P<source>acoustic|electronic|synthetic)"
    r"_(?P<iii>\d{3})-(?P<ppp>\d{3})-(?P<vvv>\d{3})$"
)


@dataclass(frozen=True)
class SampleMeta:
    """Metadata labels for one sample: who played what, how hard."""

    family: str
    source: str
    instrument_id: int
    pitch: int
    velocity: int

    def __post_init__(self):
        if self.source not in SOURCES:
            raise MalformedName(f"unknown source type {self.source!r}")
        if self.instrument_id < 0:
            raise MalformedName(f"negative instrument id {self.instrument_id}")

    def validate_grid(self):
        """Enforce the 88-key pitch range and the five velocity layers."""
        if not GRID_PITCH_MIN <= self.pitch <= GRID_PITCH_MAX:
            raise OutOfRange(
                f"pitch {self.pitch} outside [{GRID_PITCH_MIN}, {GRID_PITCH_MAX}]"
            )
        if self.velocity not in GRID_VELOCITIES:
            raise OutOfRange(
                f"velocity {self.velocity} not one of {GRID_VELOCITIES}"
            )

    @property
    def key(self):
        return (self.pitch, self.velocity)


def parse_nsynth_name(filename, validate_grid=False):
    """Parse ``family_source_iii-ppp-vvv[.wav]`` into a SampleMeta.

    The family may itself contain underscores; the source is the last
    token before the zero-padded numeric triple.
    """
    stem = str(filename)
    stem = stem.rsplit("/", 1)[-1]
    if stem.endswith(".wav"):
        stem = stem[: -len(".wav")]
    m = _NAME_RE.match(stem)
    if m is None:
        raise MalformedName(f"cannot parse sample name {filename!r}")
    meta = SampleMeta(
        family=m.group("family"),
        source=m.group("source"),
        instrument_id=int(m.group("iii")),
        pitch=int(m.group("ppp")),
        velocity=int(m.group("vvv")),
    )
    if validate_grid:
        meta.validate_grid()
    return meta


def format_nsynth_name(meta):
    """Inverse of parse_nsynth_name; returns the canonical .wav filename."""
    return (
        f"{meta.family}_{meta.source}_{meta.instrument_id:03d}"
        f"-{meta.pitch:03d}-{meta.velocity:03d}.wav"
    )


@dataclass(frozen=True)
class Sample:
    """One mono waveform plus its metadata. Immutable after construction."""

    meta: SampleMeta
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim != 1:
            raise ChannelError(f"expected mono waveform, got shape {data.shape}")
        if data.size == 0:
            raise CorruptFile("empty waveform")
        if not np.all(np.isfinite(data)):
            raise CorruptFile("waveform contains non-finite values")
        if np.max(np.abs(data)) > 1.0:
            raise CorruptFile("waveform amplitudes exceed [-1, 1]")
        if self.sample_rate <= 0:
            raise RateMismatch(f"non-positive sample rate {self.sample_rate}")
        data.flags.writeable = False
        object.__setattr__(self, "samples", data)

    def __len__(self):
        return self.samples.size

    @property
    def key(self):
        return self.meta.key


class Instrument:
    """Ensemble of samples spanning a pitch/velocity grid.

    Samples are stored in canonical (pitch, velocity) order regardless of
    the order they were supplied in. Shared rate, shared length, and key
    uniqueness are enforced here, so every constructed instrument is safe
    to feed to the metrics.
    """

    def __init__(self, name, samples):
        samples = list(samples)
        if not samples:
            raise EmptyInstrument(f"instrument {name!r} has no samples")
        rate = samples[0].sample_rate
        length = len(samples[0])
        by_key = {}
        for s in samples:
            if s.sample_rate != rate:
                raise RateMismatch(
                    f"instrument {name!r}: rates {rate} and {s.sample_rate} present"
                )
            if len(s) != length:
                raise ValueError(
                    f"instrument {name!r}: lengths {length} and {len(s)} present; "
                    "conform lengths with a policy before construction"
                )
            if s.key in by_key:
                raise DuplicateKey(
                    f"instrument {name!r}: duplicate pitch/velocity {s.key}"
                )
            by_key[s.key] = s
        self.name = name
        self.sample_rate = rate
        self._samples = {k: by_key[k] for k in sorted(by_key)}

    def __len__(self):
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples.values())

    def __getitem__(self, key):
        return self._samples[key]

    def keys(self):
        return list(self._samples)

    def items(self):
        return list(self._samples.items())

    @property
    def length(self):
        """Common waveform length L in samples."""
        return len(next(iter(self._samples.values())))


# ---------------------------------------------------------------------------
# WAV reading/writing (RIFF PCM16 / PCM24 / float32, hand-rolled so error
# classification stays exact and ingestion has no audio dependencies)
# ---------------------------------------------------------------------------

_WAVE_PCM = 0x0001
_WAVE_FLOAT = 0x0003
_WAVE_EXTENSIBLE = 0xFFFE


def load_wav(path, downmix=True):
    """Read a RIFF/WAVE file into a mono float64 waveform in [-1, 1].

    Returns (samples, sample_rate). Integer PCM is scaled symmetrically by
    2**(bits-1); float32 data is clipped to [-1, 1]. Multichannel input is
    averaged to mono when downmix is true, otherwise it is an error.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF":
        raise CorruptFile(f"{path}: not a RIFF file")
    if raw[8:12] != b"WAVE":
        raise UnsupportedFormat(f"{path}: RIFF form is not WAVE")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if cid == b"fmt ":
            if size < 16 or body_start + size > len(raw):
                raise CorruptFile(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
        elif cid == b"data":
            if body_start + size > len(raw):
                raise CorruptFile(f"{path}: truncated data chunk")
            data = raw[body_start : body_start + size]
        pos = body_start + size + (size & 1)
    if pos != len(raw) and data is None:
        raise CorruptFile(f"{path}: truncated chunk header")
    if fmt is None or data is None:
        raise CorruptFile(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _byte_rate, _block_align, bits = fmt
    if tag == _WAVE_EXTENSIBLE:
        # Sub-format GUID starts 24 bytes into the fmt body; its first two
        # bytes carry the effective format tag.
        raise UnsupportedFormat(f"{path}: WAVE_FORMAT_EXTENSIBLE not supported")
    if tag not in (_WAVE_PCM, _WAVE_FLOAT):
        raise UnsupportedFormat(f"{path}: codec tag 0x{tag:04x} is not PCM/float")
    if channels < 1 or rate <= 0:
        raise CorruptFile(f"{path}: invalid fmt fields (channels={channels}, rate={rate})")

    if tag == _WAVE_PCM and bits == 16:
        if len(data) % (2 * channels):
            raise CorruptFile(f"{path}: data size not a whole number of frames")
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _WAVE_PCM and bits == 24:
        if len(data) % (3 * channels):
            raise CorruptFile(f"{path}: data size not a whole number of frames")
        b = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        vals = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        vals = (vals ^ 0x800000) - 0x800000  # sign-extend 24 -> 32 bits
        x = vals.astype(np.float64) / 8388608.0
    elif tag == _WAVE_FLOAT and bits == 32:
        if len(data) % (4 * channels):
            raise CorruptFile(f"{path}: data size not a whole number of frames")
        x = np.clip(np.frombuffer(data, dtype="<f4").astype(np.float64), -1.0, 1.0)
    else:
        kind = "PCM" if tag == _WAVE_PCM else "float"
        raise UnsupportedFormat(f"{path}: {bits}-bit {kind} not supported")

    if x.size == 0:
        raise CorruptFile(f"{path}: empty data chunk")
    if channels > 1:
        if not downmix:
            raise ChannelError(f"{path}: {channels} channels with downmix disabled")
        x = x.reshape(-1, channels).mean(axis=1)
    return x, int(rate)


def write_wav(path, samples, sample_rate, subtype="pcm16"):
    """Write a mono or (frames, channels) waveform as a RIFF/WAVE file.

    subtype: pcm16, pcm24, or float32. Integer subtypes quantize with
    round(x * 2**(bits-1)), the exact inverse of load_wav scaling.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"expected 1-D or 2-D data, got shape {x.shape}")
    channels = x.shape[1]

    if subtype == "pcm16":
        tag, bits = _WAVE_PCM, 16
        q = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2")
        payload = q.tobytes()
    elif subtype == "pcm24":
        tag, bits = _WAVE_PCM, 24
        q = np.clip(np.rint(x * 8388608.0), -8388608, 8388607).astype(np.int32)
        u = (q & 0xFFFFFF).astype(np.uint32)
        b = np.empty(q.shape + (3,), dtype=np.uint8)
        b[..., 0] = u & 0xFF
        b[..., 1] = (u >> 8) & 0xFF
        b[..., 2] = (u >> 16) & 0xFF
        payload = b.tobytes()
    elif subtype == "float32":
        tag, bits = _WAVE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown subtype {subtype!r}")

    block_align = channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH", tag, channels, sample_rate, sample_rate * block_align, block_align, bits
    )
    pad = b"\x00" if len(payload) & 1 else b""
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", len(payload)) + payload + pad
    )
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


# ---------------------------------------------------------------------------
# Directory ingestion
# ---------------------------------------------------------------------------


def _conform_length(data, target):
    if data.size == target:
        return data
    if data.size > target:
        return data[:target]
    out = np.zeros(target, dtype=np.float64)
    out[: data.size] = data
    return out


def _read_manifest(dirpath):
    manifest = dirpath / "manifest.json"
    if not manifest.is_file():
        return None
    entries = json.loads(manifest.read_text())
    out = []
    for e in entries:
        meta = SampleMeta(
            family=e["family"],
            source=e["source"],
            instrument_id=int(e["instrument_id"]),
            pitch=int(e["pitch"]),
            velocity=int(e["velocity"]),
        )
        out.append((dirpath / e["file"], meta))
    return out


def load_instrument(
    directory,
    policy=PAD_TO_MAX,
    fixed_duration_s=None,
    validate_grid=False,
    downmix=True,
    name=None,
):
    """Assemble an Instrument from a directory of WAV files.

    Metadata comes from NSynth-style filenames, or from a manifest.json
    sidecar (entries of file/family/source/instrument_id/pitch/velocity)
    which takes precedence when present. WAVs whose names match neither
    are ignored. Lengths are conformed per policy: "pad" (zeros up to the
    longest sample, the default), "truncate" (down to the shortest), or
    "fixed" (fixed_duration_s seconds). Rates must agree exactly; this
    loader never resamples.
    """
    dirpath = Path(directory)
    pairs = _read_manifest(dirpath)
    if pairs is None:
        pairs = []
        for wav in sorted(dirpath.glob("*.wav")):
            try:
                meta = parse_nsynth_name(wav.name)
            except MalformedName:
                continue
            pairs.append((wav, meta))
    if len(pairs) < 2:
        raise EmptyInstrument(
            f"{directory}: found {len(pairs)} usable samples, need at least 2"
        )

    loaded = []
    for path, meta in pairs:
        if validate_grid:
            meta.validate_grid()
        data, rate = load_wav(path, downmix=downmix)
        loaded.append((meta, data, rate))

    rates = {rate for _, _, rate in loaded}
    if len(rates) > 1:
        raise RateMismatch(f"{directory}: sample rates {sorted(rates)} present")
    rate = rates.pop()

    keys_seen = set()
    for meta, _, _ in loaded:
        if meta.key in keys_seen:
            raise DuplicateKey(f"{directory}: duplicate pitch/velocity {meta.key}")
        keys_seen.add(meta.key)

    lengths = [data.size for _, data, _ in loaded]
    if policy == PAD_TO_MAX:
        target = max(lengths)
    elif policy == TRUNCATE_TO_MIN:
        target = min(lengths)
    elif policy == FIXED_DURATION:
        if fixed_duration_s is None:
            raise ValueError("fixed policy requires fixed_duration_s")
        target = int(round(fixed_duration_s * rate))
    else:
        raise ValueError(f"unknown length policy {policy!r}")

    samples = [
        Sample(meta=meta, samples=_conform_length(data, target), sample_rate=rate)
        for meta, data, _ in loaded
    ]
    return Instrument(name or dirpath.name, samples)
