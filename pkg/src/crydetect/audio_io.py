"""Audio decoding, resampling and dataset manifests.

WAV support is deliberately narrow: RIFF/WAVE little-endian, PCM 16-bit or
IEEE float 32-bit, mono or stereo. Everything else raises a typed error that
names the offending format field instead of guessing.
"""

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import upfirdn

from .errors import AudioFormatError, AudioParseError, ManifestError, ParameterError

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_IEEE_FLOAT = 3

LABEL_ALIASES = {"0": 0, "1": 1, "cry": 1, "notcry": 0}
MANIFEST_HEADER = ["id", "path", "label", "participant", "split"]


@dataclass
class AudioSegment:
    """Mono sample buffer in [-1, 1] with its sample rate."""

    samples: np.ndarray
    sample_rate: int
    id: str = ""

    @property
    def duration(self):
        return len(self.samples) / float(self.sample_rate)


@dataclass
class ManifestEntry:
    id: str
    path: str
    label: int
    participant: str
    split: str


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)

    def subset(self, split):
        return [e for e in self.entries if e.split == split]

    def __len__(self):
        return len(self.entries)


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise AudioParseError("truncated file while reading %s" % what, fh.tell() - len(data))
    return data


def read_wav(path):
    """Decode a WAV file to a mono AudioSegment.

    16-bit PCM sample v maps to v/32768; 32-bit float is taken verbatim and
    clipped to [-1, 1]. Stereo is mixed to mono by averaging the channels.
    """
    with open(path, "rb") as fh:
        riff = _read_exact(fh, 12, "RIFF header")
        if riff[0:4] != b"RIFF":
            raise AudioParseError("not a RIFF container", 0)
        if riff[8:12] != b"WAVE":
            raise AudioParseError("RIFF form type is not WAVE", 8)

        fmt = None
        data = None
        while data is None:
            hdr = fh.read(8)
            if len(hdr) == 0:
                break
            if len(hdr) != 8:
                raise AudioParseError("truncated chunk header", fh.tell() - len(hdr))
            chunk_id, size = struct.unpack("<4sI", hdr)
            if chunk_id == b"fmt ":
                if size < 16:
                    raise AudioParseError("fmt chunk too short", fh.tell())
                body = _read_exact(fh, size, "fmt chunk")
                fmt = struct.unpack("<HHIIHH", body[:16])
            elif chunk_id == b"data":
                data = _read_exact(fh, size, "data chunk")
            else:
                # skip unknown chunks; RIFF pads odd sizes to even
                fh.seek(size + (size & 1), 1)
            if chunk_id == b"fmt " and (size & 1):
                fh.seek(1, 1)

        if fmt is None:
            raise AudioParseError("missing fmt chunk", fh.tell())
        if data is None:
            raise AudioParseError("missing data chunk", fh.tell())

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise AudioFormatError("audio_format", audio_format)
    if channels not in (1, 2):
        raise AudioFormatError("channels", channels)
    if audio_format == WAVE_FORMAT_PCM and bits != 16:
        raise AudioFormatError("bits_per_sample", bits, "PCM requires 16 bits, got %d" % bits)
    if audio_format == WAVE_FORMAT_IEEE_FLOAT and bits != 32:
        raise AudioFormatError("bits_per_sample", bits, "IEEE float requires 32 bits, got %d" % bits)
    if sample_rate <= 0:
        raise AudioFormatError("sample_rate", sample_rate)

    if audio_format == WAVE_FORMAT_PCM:
        raw = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    else:
        raw = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    if channels == 2:
        samples = samples[: len(samples) - len(samples) % 2].reshape(-1, 2).mean(axis=1)
    samples = np.clip(samples, -1.0, 1.0)
    return AudioSegment(samples=samples, sample_rate=int(sample_rate), id="")


def write_wav(path, seg, fmt="pcm16"):
    """Write a mono AudioSegment as WAV ('pcm16' or 'float32')."""
    x = np.asarray(seg.samples, dtype=np.float64)
    if fmt == "pcm16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        payload = q.tobytes()
        audio_format, bits = WAVE_FORMAT_PCM, 16
    elif fmt == "float32":
        payload = x.astype("<f4").tobytes()
        audio_format, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise AudioFormatError("fmt", fmt)
    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, audio_format, 1, seg.sample_rate,
        seg.sample_rate * block_align, block_align, bits,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def _design_lowpass(up, down, taps_per_phase=64, beta=8.6):
    """Kaiser-windowed sinc for polyphase rational resampling.

    Cutoff at the tighter of the two Nyquist limits; DC gain normalized to
    `up` so the zero-stuffed stream comes out at unit gain.
    """
    n_taps = taps_per_phase * up
    cutoff = min(1.0 / up, 1.0 / down)
    n = np.arange(n_taps)
    center = (n_taps - 1) / 2.0
    h = cutoff * np.sinc(cutoff * (n - center)) * np.kaiser(n_taps, beta)
    h *= up / h.sum()
    return h


def resample(seg, target_rate):
    """Band-limited polyphase resample to target_rate.

    Identical rates return the samples bit-for-bit (copy). Output length is
    ceil(n * target/source), within one sample of the duration contract.
    """
    if target_rate <= 0:
        raise ParameterError("target_rate must be positive, got %r" % target_rate)
    if target_rate == seg.sample_rate:
        return AudioSegment(seg.samples.copy(), seg.sample_rate, seg.id)
    g = math.gcd(seg.sample_rate, int(target_rate))
    up = int(target_rate) // g
    down = seg.sample_rate // g
    h = _design_lowpass(up, down)
    n_out = -(-len(seg.samples) * up // down)
    y = upfirdn(h, seg.samples, up, down)
    start = ((len(h) - 1) // 2) // down
    y = y[start:start + n_out]
    if len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    return AudioSegment(np.clip(y, -1.0, 1.0), int(target_rate), seg.id)


def load_manifest(path, allow_split_overlap=False):
    """Parse a dataset manifest CSV.

    Header must be exactly `id,path,label,participant,split`. Labels accept
    0/1/cry/notcry. Unless allow_split_overlap is set, a participant present
    in both train and test is an error (it leaks speaker identity across the
    split).
    """
    entries = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = next(rows)
        except StopIteration:
            raise ManifestError("empty manifest: %s" % path) from None
        if header != MANIFEST_HEADER:
            missing = [c for c in MANIFEST_HEADER if c not in header]
            if missing:
                raise ManifestError("manifest missing column(s): %s" % ", ".join(missing))
            raise ManifestError("manifest header must be %s" % ",".join(MANIFEST_HEADER))
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ManifestError("line %d: expected 5 fields, got %d" % (lineno, len(row)))
            sid, spath, label, participant, split = row
            if sid in seen:
                raise ManifestError("duplicate segment id: %s" % sid)
            seen.add(sid)
            if label not in LABEL_ALIASES:
                raise ManifestError("line %d: label must be one of 0,1,cry,notcry; got %r" % (lineno, label))
            if split not in ("train", "test"):
                raise ManifestError("line %d: split must be train or test; got %r" % (lineno, split))
            entries.append(ManifestEntry(sid, spath, LABEL_ALIASES[label], participant, split))

    if not allow_split_overlap:
        by_split = {"train": set(), "test": set()}
        for e in entries:
            by_split[e.split].add(e.participant)
        overlap = sorted(by_split["train"] & by_split["test"])
        if overlap:
            raise ManifestError(
                "participant(s) present in both splits: %s" % ", ".join(overlap)
            )
    return DatasetManifest(entries=entries)


def write_manifest(path, manifest):
    """Inverse of load_manifest; numeric labels are written as 0/1."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            w.writerow([e.id, e.path, e.label, e.participant, e.split])
