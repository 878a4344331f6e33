"""Signal conditioning and frame-level spectral features.

All operations are pure functions; coefficient tables (filter sections, mel
weights) are built once and safe to share across threads. Every log of an
energy-like quantity is floored at LOG_FLOOR to keep silence finite.
"""

import numpy as np
from scipy.fft import dct
from scipy.signal import butter, sosfiltfilt

from .audio_io import AudioSegment
from .errors import ParameterError

LOG_FLOOR = 1e-10


class FilterSpec:
    """Bandpass filter as cascaded biquads (b0,b1,b2,a1,a2 per section)."""

    def __init__(self, sections, low_hz, high_hz):
        self.sections = [tuple(float(c) for c in s) for s in sections]
        self.low_hz = low_hz
        self.high_hz = high_hz
        for b0, b1, b2, a1, a2 in self.sections:
            poles = np.roots([1.0, a1, a2])
            if np.any(np.abs(poles) >= 1.0):
                raise ParameterError("unstable filter section (pole on or outside unit circle)")

    def as_sos(self):
        return np.array([[b0, b1, b2, 1.0, a1, a2] for b0, b1, b2, a1, a2 in self.sections])


class Spectrogram:
    """Magnitude spectrogram: frames x bins, bins = frame_length//2 + 1."""

    def __init__(self, magnitudes, frame_length, hop, sample_rate):
        self.magnitudes = magnitudes
        self.frame_length = frame_length
        self.hop = hop
        self.sample_rate = sample_rate

    @property
    def bin_frequencies(self):
        n_bins = self.magnitudes.shape[1]
        return np.arange(n_bins) * (self.sample_rate / float(self.frame_length))


class MelFilterbank:
    def __init__(self, weights, fmin, fmax):
        self.weights = weights
        self.fmin = fmin
        self.fmax = fmax


def design_bandpass(sample_rate, low=300.0, high=3000.0):
    """Second-order-section Butterworth bandpass (4th-order transfer)."""
    nyq = sample_rate / 2.0
    if not (0.0 < low < high):
        raise ParameterError("need 0 < low < high, got low=%r high=%r" % (low, high))
    if high >= nyq:
        raise ParameterError("high edge %r must be below Nyquist %r" % (high, nyq))
    sos = butter(2, [low, high], btype="band", fs=sample_rate, output="sos")
    sections = [(r[0], r[1], r[2], r[4], r[5]) for r in sos]
    return FilterSpec(sections, low, high)


def bandpass(seg, low=300.0, high=3000.0):
    """Zero-phase bandpass: forward and time-reversed passes of the filter.

    The double pass squares the magnitude response (8th-order rolloff) and
    cancels the phase, so transients keep their positions.
    """
    spec = design_bandpass(seg.sample_rate, low, high)
    y = sosfiltfilt(spec.as_sos(), seg.samples)
    return AudioSegment(y, seg.sample_rate, seg.id)


def is_silent(seg, threshold_dbfs=-50.0):
    """RMS silence gate. Returns (silent, rms_dbfs); all-zero gives -inf."""
    x = np.asarray(seg.samples, dtype=np.float64)
    rms = np.sqrt(np.mean(x * x)) if len(x) else 0.0
    if rms == 0.0:
        return True, float("-inf")
    rms_dbfs = 20.0 * np.log10(rms)
    return bool(rms_dbfs < threshold_dbfs), float(rms_dbfs)


def hann_periodic(n):
    # periodic variant: sums to exactly n/2, which the DC test relies on
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(seg, frame_length=400, hop=160):
    """Magnitude STFT with Hann window and reflect padding.

    Frames are centered: the signal is reflect-padded by frame_length//2 on
    both ends so frame k covers samples around k*hop.
    """
    x = np.asarray(seg.samples, dtype=np.float64)
    if len(x) == 0:
        raise ParameterError("cannot take STFT of an empty signal")
    if not (0 < hop <= frame_length):
        raise ParameterError("need 0 < hop <= frame_length, got hop=%d frame_length=%d" % (hop, frame_length))
    pad = frame_length // 2
    if len(x) < 2:
        # reflect padding needs at least 2 samples; extend by edge value
        x = np.pad(x, (0, 2 - len(x)), mode="edge")
    xp = np.pad(x, (pad, pad), mode="reflect")
    n_frames = 1 + (len(xp) - frame_length) // hop
    window = hann_periodic(frame_length)
    idx = np.arange(frame_length)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = xp[idx] * window[None, :]
    mags = np.abs(np.fft.rfft(frames, axis=1))
    return Spectrogram(mags, frame_length, hop, seg.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate, frame_length, n_mels=40, fmin=0.0, fmax=None):
    """Triangular mel filters (unit peak) over the rfft bin grid."""
    if fmax is None:
        fmax = sample_rate / 2.0
    n_bins = frame_length // 2 + 1
    bin_freqs = np.arange(n_bins) * (sample_rate / float(frame_length))
    mel_points = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    weights = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - lo) / max(mid - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - mid, 1e-12)
        weights[m] = np.maximum(0.0, np.minimum(rising, falling))
        if not np.any(weights[m] > 0):
            raise ParameterError("mel filter %d has no nonzero weight; frame too short" % m)
    return MelFilterbank(weights, fmin, fmax)


def mfcc_from_mel(mel_energies, n_mfcc=20):
    """Log (floored) then orthonormal DCT-II; first n_mfcc coefficients.

    Exposed separately from mfcc() so the constant-mel identity (all
    coefficients beyond the first are zero) can be checked directly.
    """
    logmel = np.log(np.maximum(mel_energies, LOG_FLOOR))
    coeffs = dct(logmel, type=2, norm="ortho", axis=-1)
    return coeffs[..., :n_mfcc]


def mfcc(spec, n_mfcc=20, n_mels=40):
    """MFCCs of a spectrogram: mel energies of the power spectrum -> log -> DCT."""
    if n_mfcc > n_mels:
        raise ParameterError("n_mfcc (%d) must not exceed n_mels (%d)" % (n_mfcc, n_mels))
    fb = mel_filterbank(spec.sample_rate, spec.frame_length, n_mels)
    power = spec.magnitudes ** 2
    mel_energies = power @ fb.weights.T
    return mfcc_from_mel(mel_energies, n_mfcc)


def chroma(spec):
    """Fold spectral energy into 12 pitch classes (C=0 .. B=11, A4=440 Hz).

    Bin at frequency f joins class (round(12*log2(f/440)) + 9) mod 12; class
    energies are per-frame normalized to unit max so level cancels out.
    """
    freqs = spec.bin_frequencies
    power = spec.magnitudes ** 2
    out = np.zeros((power.shape[0], 12))
    positive = freqs > 0
    classes = np.zeros(len(freqs), dtype=int)
    classes[positive] = (
        np.rint(12.0 * np.log2(freqs[positive] / 440.0)).astype(int) + 9
    ) % 12
    for pc in range(12):
        mask = positive & (classes == pc)
        if np.any(mask):
            out[:, pc] = power[:, mask].sum(axis=1)
    peaks = out.max(axis=1)
    nonzero = peaks > 0
    out[nonzero] /= peaks[nonzero, None]
    return out


def contrast_band_edges(sample_rate, n_bands=6, start_hz=200.0):
    """Sub-start band plus n_bands octave bands; last one capped at Nyquist."""
    nyq = sample_rate / 2.0
    if start_hz * 2 ** (n_bands - 1) >= nyq:
        raise ParameterError(
            "octave bands from %g Hz exceed Nyquist %g with n_bands=%d" % (start_hz, nyq, n_bands)
        )
    edges = [0.0] + [start_hz * 2.0 ** k for k in range(n_bands)] + [nyq]
    return edges


def spectral_contrast(spec, n_bands=6, alpha=0.02):
    """Per-band log difference between strongest and weakest bin magnitudes.

    For each band holding k bins, the top and bottom ceil(alpha*k) magnitudes
    are averaged; contrast = log(peak mean) - log(valley mean), floored.
    A flat spectrum gives exactly zero in every band.
    """
    edges = contrast_band_edges(spec.sample_rate, n_bands)
    freqs = spec.bin_frequencies
    mags = spec.magnitudes
    n_frames = mags.shape[0]
    out = np.zeros((n_frames, n_bands + 1))
    for b in range(n_bands + 1):
        lo, hi = edges[b], edges[b + 1]
        if b == n_bands:
            mask = (freqs >= lo) & (freqs <= hi)
        else:
            mask = (freqs >= lo) & (freqs < hi)
        k = int(mask.sum())
        if k == 0:
            raise ParameterError("contrast band %d (%g-%g Hz) contains no bins" % (b, lo, hi))
        m = int(np.ceil(alpha * k))
        band = np.sort(mags[:, mask], axis=1)
        valley = band[:, :m].mean(axis=1)
        peak = band[:, -m:].mean(axis=1)
        out[:, b] = np.log(np.maximum(peak, LOG_FLOOR)) - np.log(np.maximum(valley, LOG_FLOOR))
    return out
