"""Exception types raised across the toolkit."""


class InstrumentEvalError(Exception):
    """Base class for every error this package raises on purpose."""


class MalformedName(InstrumentEvalError):
    """Filename does not follow the family_source_iii-ppp-vvv grammar."""


class OutOfRange(InstrumentEvalError):
    """Pitch or velocity outside the validated keyboard grid."""


class UnsupportedFormat(InstrumentEvalError):
    """Compressed or unknown codec, or an unsupported PCM bit depth."""


class ChannelError(InstrumentEvalError):
    """Multichannel file read with downmixing disabled."""


class CorruptFile(InstrumentEvalError):
    """Broken RIFF structure, truncated data, or empty audio payload."""


class EmptyInstrument(InstrumentEvalError):
    """Not enough samples to form (or evaluate) an instrument."""


class RateMismatch(InstrumentEvalError):
    """Samples in one instrument disagree on sample rate."""


class DuplicateKey(InstrumentEvalError):
    """Two samples claim the same (pitch, velocity) slot."""


class TooShort(InstrumentEvalError):
    """Waveform shorter than one analysis frame."""


class DegenerateBands(InstrumentEvalError):
    """Mel filters too narrow for the FFT grid: collapsed or empty bands."""


class NonPositiveFrequency(InstrumentEvalError):
    """Frequency must be positive to map onto the MIDI scale."""


class AllUnvoiced(InstrumentEvalError):
    """No sample produced a usable pitch estimate."""


class AliasedHarmonics(InstrumentEvalError):
    """A synthesis partial falls at or above Nyquist with dropping disabled."""
