"""Run a pretrained speech encoder over manifest segments and write the
embeddings as a W2VE sidecar file.

The sidecar format is the detector toolkit's embedding interchange format:
magic "W2VE", u32 version (1), u32 dim, then per record a u16 id length,
the UTF-8 id bytes and dim little-endian float32 values. Records land in
manifest order. Output is written to a temp file and renamed into place, so
a failed run never leaves a partial sidecar behind.
"""

import csv
import os
import struct
import sys
from dataclasses import dataclass, field
from math import gcd

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

W2VE_MAGIC = b"W2VE"
W2VE_VERSION = 1
TARGET_RATE = 16000

MANIFEST_HEADER = ["id", "path", "label", "participant", "split"]


class ExportError(Exception):
    pass


@dataclass
class ExportJob:
    manifest: str
    model_id: str
    out_path: str
    pooling: str = "mean"
    batch: int = 1
    skip_errors: bool = False


@dataclass
class ExportResult:
    dim: int
    written: int
    skipped: list = field(default_factory=list)


def read_manifest(path):
    """(id, audio_path) pairs in manifest order.

    Relative audio paths resolve against the manifest's directory; comment
    lines starting with '#' are ignored, matching the toolkit's CSV artifacts.
    """
    base = os.path.dirname(os.path.abspath(path))
    out = []
    seen = set()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header != MANIFEST_HEADER:
            raise ExportError(
                "manifest header must be %s, got %r" % (",".join(MANIFEST_HEADER), header)
            )
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ExportError(
                    "manifest line %d has %d fields, expected %d"
                    % (lineno, len(row), len(MANIFEST_HEADER))
                )
            sid, audio_path = row[0], row[1]
            if sid in seen:
                raise ExportError("duplicate segment id %r (line %d)" % (sid, lineno))
            seen.add(sid)
            if not os.path.isabs(audio_path):
                audio_path = os.path.join(base, audio_path)
            out.append((sid, audio_path))
    return out


def load_audio(path, target_rate=TARGET_RATE):
    """Mono float32 signal at target_rate from a WAV file."""
    rate, data = wavfile.read(path)
    x = np.asarray(data)
    # scale to [-1, 1] before any averaging so integer widths are honored
    if x.dtype == np.int16:
        x = x.astype(np.float32) / 32768.0
    elif x.dtype == np.int32:
        x = x.astype(np.float32) / 2147483648.0
    elif x.dtype == np.uint8:
        x = (x.astype(np.float32) - 128.0) / 128.0
    else:
        x = x.astype(np.float32)
    if x.ndim == 2:
        x = x.mean(axis=1, dtype=np.float32)
    if len(x) == 0:
        raise ExportError("%s holds no samples" % path)
    if rate != target_rate:
        g = gcd(int(rate), target_rate)
        x = resample_poly(x, target_rate // g, int(rate) // g).astype(np.float32)
    return x


class EmbeddingModel:
    """Pretrained wav2vec2-style encoder, eval mode, mean pooling over time."""

    def __init__(self, model_id):
        # torch and transformers are slow imports; defer them so argument
        # errors and --help never pay the startup cost
        import torch
        import transformers
        from transformers import Wav2Vec2Model

        transformers.logging.disable_progress_bar()
        try:
            self.model = Wav2Vec2Model.from_pretrained(model_id)
        except (OSError, ValueError) as exc:
            raise ExportError("cannot load checkpoint %r: %s" % (model_id, exc)) from exc
        self.model.eval()
        self.model_id = model_id
        self.dim = int(self.model.config.hidden_size)
        self._torch = torch

    def _frames_after_conv(self, n_samples):
        # the conv frontend downsamples; mirror its length arithmetic so
        # padded positions can be excluded from the pooled mean
        n = n_samples
        for kernel, stride in zip(self.model.config.conv_kernel, self.model.config.conv_stride):
            n = (n - kernel) // stride + 1
        return n

    def embed_batch(self, signals):
        """One mean-pooled float32 vector per signal.

        All signals in a batch must share one length: base-style checkpoints
        group-normalize over time in the conv frontend, so padded batching
        would change the embeddings of the shorter members. The exporter
        only ever hands this method equal-length groups.
        """
        torch = self._torch
        lengths = {len(x) for x in signals}
        if len(lengths) != 1:
            raise ExportError("internal error: batch mixes segment lengths %r" % sorted(lengths))
        n = lengths.pop()
        if self._frames_after_conv(n) < 1:
            raise ExportError("segment too short for the encoder (%d samples)" % n)
        batch = np.empty((len(signals), n), dtype=np.float32)
        for i, x in enumerate(signals):
            # per-segment zero-mean unit-variance input, the documented
            # wav2vec2 recipe; keeps the export free of processor configs
            x = np.asarray(x, dtype=np.float32)
            batch[i] = (x - x.mean()) / max(float(x.std()), 1e-7)
        with torch.no_grad():
            hidden = self.model(torch.from_numpy(batch)).last_hidden_state.numpy()
        return [h.mean(axis=0).astype(np.float32) for h in hidden]


def _write_record(fh, sid, vec, dim):
    sid_bytes = sid.encode("utf-8")
    if len(sid_bytes) > 0xFFFF:
        raise ExportError("segment id %r exceeds the 65535-byte limit" % sid)
    vec = np.ascontiguousarray(vec, dtype="<f4")
    if vec.shape != (dim,):
        raise ExportError("embedding for %r has shape %r, expected (%d,)" % (sid, vec.shape, dim))
    fh.write(struct.pack("<H", len(sid_bytes)))
    fh.write(sid_bytes)
    fh.write(vec.tobytes())


def _write_metadata(job, result):
    lines = [
        "model %s" % job.model_id,
        "pooling %s" % job.pooling,
        "layer last_hidden_state",
        "dim %d" % result.dim,
        "input_rate %d" % TARGET_RATE,
        "normalize per_segment_zscore",
        "records %d" % result.written,
        "skipped %s" % (",".join(result.skipped) if result.skipped else "none"),
    ]
    meta_path = job.out_path + ".meta"
    tmp = meta_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, meta_path)


def export(job):
    """Embed every manifest segment and write the sidecar; returns ExportResult.

    Decode failures abort the run unless job.skip_errors is set, in which
    case the ids are logged to stderr and recorded in the metadata file.
    Consecutive equal-length segments share an inference batch up to
    job.batch; a length change starts a new batch (see embed_batch for why
    padding is off the table). Records land in manifest order through the
    single writer.
    """
    if job.pooling != "mean":
        raise ExportError("unsupported pooling %r (only mean is implemented)" % job.pooling)
    if job.batch < 1:
        raise ExportError("batch size must be >= 1, got %d" % job.batch)
    entries = read_manifest(job.manifest)
    model = EmbeddingModel(job.model_id)

    result = ExportResult(dim=model.dim, written=0)
    tmp = job.out_path + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(W2VE_MAGIC)
            fh.write(struct.pack("<II", W2VE_VERSION, model.dim))

            pending_ids, pending_signals = [], []

            def flush():
                for sid, vec in zip(pending_ids, model.embed_batch(pending_signals)):
                    _write_record(fh, sid, vec, model.dim)
                    result.written += 1
                pending_ids.clear()
                pending_signals.clear()

            for sid, path in entries:
                try:
                    signal = load_audio(path)
                except (OSError, ValueError, ExportError) as exc:
                    if not job.skip_errors:
                        raise ExportError("segment %s: %s" % (sid, exc)) from exc
                    print("embed-export: skipping %s: %s" % (sid, exc), file=sys.stderr)
                    result.skipped.append(sid)
                    continue
                if pending_signals and (
                    len(pending_signals) >= job.batch or len(signal) != len(pending_signals[0])
                ):
                    flush()
                pending_ids.append(sid)
                pending_signals.append(signal)
            if pending_signals:
                flush()
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    os.replace(tmp, job.out_path)
    _write_metadata(job, result)
    return result
