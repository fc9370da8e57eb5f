"""Feature chain for timbral comparison: STFT -> mel -> log -> cepstral lifter.

The liftered log-mel feature of a waveform x is

    y = Dinv . Dmasked . log(B |STFT(x)|^p + eps)

where B is a mel filterbank, D an orthonormal DCT-II basis, and Dmasked
keeps only the low-quefrency rows. Keeping a handful of cepstral
coefficients smooths away the harmonic comb (the pitched excitation) and
leaves the spectral envelope, so samples of different pitch can be
compared as timbres.

Analysis framing is deliberately rigid: Hann window of fft_size, no
centering or padding, frames starting at sample 0. Every pairwise
comparison then sees identically framed signals.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateBands, TooShort


@dataclass(frozen=True)
class ScaleConfig:
    """Parameters for one analysis scale."""

    fft_size: int = 2048
    hop_size: int = 512
    window: str = "hann"
    mel_bands: int = 80
    lifter_order: int = 13
    power: float = 1.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size {self.fft_size} is not a power of two")
        if not 0 < self.hop_size <= self.fft_size:
            raise ValueError(f"hop_size {self.hop_size} outside (0, fft_size]")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if not 1 <= self.lifter_order <= self.mel_bands:
            raise ValueError(
                f"lifter_order {self.lifter_order} outside [1, {self.mel_bands}]"
            )
        if self.power <= 0:
            raise ValueError(f"power {self.power} must be positive")
        if self.log_floor <= 0:
            raise ValueError(f"log_floor {self.log_floor} must be positive")


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters, peak 1, rows = bands, cols = rfft bins."""

    matrix: np.ndarray
    sample_rate: int


@dataclass(frozen=True)
class LifterBasis:
    """Orthonormal DCT-II basis with a low-quefrency row mask.

    projection = D_inv @ D_masked is the lifter as a single idempotent
    matrix acting on log-mel columns.
    """

    D: np.ndarray
    D_masked: np.ndarray
    D_inv: np.ndarray
    kept: np.ndarray
    projection: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "projection", self.D_inv @ self.D_masked)


@dataclass(frozen=True)
class LifteredFeature:
    """Liftered log-mel matrix for one sample at one scale (bands x frames)."""

    y: np.ndarray
    scale_index: int = 0

    @property
    def frames(self):
        return self.y.shape[1]


def hann_window(n):
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples, cfg):
    """Number of analysis frames for a waveform of n_samples."""
    if n_samples < cfg.fft_size:
        return 0
    return (n_samples - cfg.fft_size) // cfg.hop_size + 1


def stft_magnitude(x, cfg):
    """Magnitude STFT, shape (fft_size//2 + 1, frames).

    Column t is |rDFT(hann * x[t*hop : t*hop + fft_size])|. No padding:
    frames that would run past the end are dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected mono waveform, got shape {x.shape}")
    if x.size < cfg.fft_size:
        raise TooShort(
            f"waveform of {x.size} samples shorter than fft_size {cfg.fft_size}"
        )
    frames = sliding_window_view(x, cfg.fft_size)[:: cfg.hop_size]
    spectra = np.fft.rfft(frames * hann_window(cfg.fft_size), axis=1)
    return np.ascontiguousarray(np.abs(spectra).T)


def hz_to_mel(f):
    """HTK mel scale: 2595 log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(cfg, sample_rate):
    """Triangular filterbank with centers equally spaced in mel.

    M = cfg.mel_bands filters between 0 Hz and Nyquist; each triangle
    peaks at 1 on its own center and reaches zero at its neighbors'
    centers. Raises DegenerateBands when the FFT grid cannot resolve the
    requested band count.
    """
    if sample_rate <= 0:
        raise ValueError(f"sample_rate {sample_rate} must be positive")
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = sample_rate * np.arange(n_bins, dtype=np.float64) / cfg.fft_size

    mel_pts = np.linspace(0.0, float(hz_to_mel(sample_rate / 2.0)), cfg.mel_bands + 2)
    f_pts = mel_to_hz(mel_pts)
    centers = f_pts[1:-1]

    center_bins = np.rint(centers * cfg.fft_size / sample_rate).astype(int)
    if np.unique(center_bins).size < cfg.mel_bands:
        raise DegenerateBands(
            f"{cfg.mel_bands} bands collapse onto shared DFT bins at "
            f"fft_size {cfg.fft_size}, rate {sample_rate}"
        )

    lower = f_pts[:-2, None]
    center = f_pts[1:-1, None]
    upper = f_pts[2:, None]
    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    matrix = np.maximum(0.0, np.minimum(rising, falling))

    if np.any(matrix.max(axis=1) <= 0.0):
        raise DegenerateBands(
            f"some of the {cfg.mel_bands} bands cover no DFT bin at "
            f"fft_size {cfg.fft_size}, rate {sample_rate}"
        )
    return MelFilterbank(matrix=matrix, sample_rate=int(sample_rate))


def dct_matrix(n):
    """Orthonormal DCT-II basis: row k dotted with a length-n signal gives
    its k-th cepstral coefficient; the transpose is the exact inverse."""
    k = np.arange(n, dtype=np.float64)[:, None]
    j = np.arange(n, dtype=np.float64)[None, :]
    D = np.sqrt(2.0 / n) * np.cos(np.pi * (j + 0.5) * k / n)
    D[0] *= np.sqrt(0.5)
    return D


def build_lifter(cfg, exclude_dc=False):
    """Masked-DCT lifter basis for cfg.mel_bands / cfg.lifter_order.

    Kept rows are quefrencies 0..m-1 (DC included), or 1..m with
    exclude_dc, which additionally makes features gain-invariant. With
    m = M the round trip Dinv @ Dmasked is the identity.
    """
    M = cfg.mel_bands
    m = cfg.lifter_order
    D = dct_matrix(M)
    if exclude_dc:
        kept = np.arange(1, min(m + 1, M))
    else:
        kept = np.arange(m)
    D_masked = np.zeros_like(D)
    D_masked[kept] = D[kept]
    return LifterBasis(D=D, D_masked=D_masked, D_inv=D.T.copy(), kept=kept)


def liftered_logmel(x, cfg, fb, lb, scale_index=0):
    """Liftered log-mel feature of one waveform at one scale.

    Computes projection @ log(B |STFT(x)|^p + log_floor) with the natural
    log applied columnwise. Silence maps to a constant log(log_floor)
    matrix, which the lifter passes through unchanged.
    """
    mag = stft_magnitude(x, cfg)
    if cfg.power != 1.0:
        mag = mag**cfg.power
    logmel = np.log(fb.matrix @ mag + cfg.log_floor)
    return LifteredFeature(y=lb.projection @ logmel, scale_index=scale_index)
