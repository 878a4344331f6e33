"""Segment-level feature assembly, sidecar embeddings and standardization.

Frame-level matrices (from dsp) are reduced to one vector per segment by
mean and population std per dimension. Deep embeddings arrive precomputed in
a small binary sidecar ("W2VE") keyed by segment id; the toolkit never runs
a neural model itself.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmbeddingFormatError, SchemaError

W2VE_MAGIC = b"W2VE"
W2VE_VERSION = 1

BLOCK_NAMES = ("mfcc", "chroma", "contrast", "embedding")


class FeatureSchema:
    """Ordered feature blocks (name, dimension) making up one vector."""

    def __init__(self, blocks):
        names = [n for n, _ in blocks]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate block names in schema: %r" % names)
        for n, d in blocks:
            if n not in BLOCK_NAMES:
                raise SchemaError("unknown block name %r (expected one of %s)" % (n, ", ".join(BLOCK_NAMES)))
            if d <= 0:
                raise SchemaError("block %r must have positive dimension, got %d" % (n, d))
        self.blocks = [(str(n), int(d)) for n, d in blocks]
        self.total_dim = sum(d for _, d in self.blocks)

    def offsets(self):
        """Map block name -> (start, end) slice bounds into the vector."""
        out = {}
        pos = 0
        for name, dim in self.blocks:
            out[name] = (pos, pos + dim)
            pos += dim
        return out

    def names(self):
        return [n for n, _ in self.blocks]

    def __eq__(self, other):
        return isinstance(other, FeatureSchema) and self.blocks == other.blocks

    def __repr__(self):
        return "FeatureSchema(%r)" % (self.blocks,)


@dataclass
class FeatureVector:
    values: np.ndarray
    schema: FeatureSchema
    segment_id: str


@dataclass
class ScalerParams:
    means: np.ndarray
    stds: np.ndarray


class EmbeddingTable:
    def __init__(self, dim, entries=None):
        self.dim = int(dim)
        self.entries = dict(entries or {})

    def __contains__(self, segment_id):
        return segment_id in self.entries

    def __getitem__(self, segment_id):
        return self.entries[segment_id]

    def __len__(self):
        return len(self.entries)


def aggregate(frames, stats=("mean", "std")):
    """Collapse a frames x d matrix to [means || stds] of length 2d.

    Population std (divide by n). A single frame yields zeros for the std
    half rather than NaN.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise SchemaError("aggregate needs a non-empty frames x d matrix")
    parts = []
    for stat in stats:
        if stat == "mean":
            parts.append(frames.mean(axis=0))
        elif stat == "std":
            parts.append(frames.std(axis=0))
        else:
            raise SchemaError("unknown aggregate stat %r" % stat)
    return np.concatenate(parts)


def load_embeddings(path):
    """Read a W2VE sidecar file into an EmbeddingTable.

    Layout (little-endian): magic 'W2VE', u32 version, u32 dim, then per
    record u16 id length, UTF-8 id bytes, dim float32 values. No padding.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != W2VE_MAGIC:
        raise EmbeddingFormatError("bad magic %r (expected %r)" % (blob[:4], W2VE_MAGIC))
    if len(blob) < 12:
        raise EmbeddingFormatError("header truncated: %d bytes" % len(blob))
    version, dim = struct.unpack_from("<II", blob, 4)
    if version != W2VE_VERSION:
        raise EmbeddingFormatError("unsupported version %d (expected %d)" % (version, W2VE_VERSION))
    if dim == 0:
        raise EmbeddingFormatError("dim must be positive")
    entries = {}
    pos = 12
    rec_bytes = 4 * dim
    while pos < len(blob):
        if pos + 2 > len(blob):
            raise EmbeddingFormatError("truncated record header at byte %d" % pos)
        (id_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        if pos + id_len + rec_bytes > len(blob):
            raise EmbeddingFormatError(
                "record at byte %d shorter than header dim %d implies" % (pos - 2, dim)
            )
        sid = blob[pos:pos + id_len].decode("utf-8")
        pos += id_len
        vec = np.frombuffer(blob, dtype="<f4", count=dim, offset=pos).copy()
        pos += rec_bytes
        if sid in entries:
            raise EmbeddingFormatError("duplicate segment id %r in embedding file" % sid)
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError("non-finite values in embedding for %r" % sid)
        entries[sid] = vec
    return EmbeddingTable(dim, entries)


def write_embeddings(path, table, order=None):
    """Inverse of load_embeddings. Values are stored as float32, bit-exact."""
    ids = list(order) if order is not None else list(table.entries)
    with open(path, "wb") as fh:
        fh.write(W2VE_MAGIC)
        fh.write(struct.pack("<II", W2VE_VERSION, table.dim))
        for sid in ids:
            vec = np.asarray(table.entries[sid], dtype="<f4")
            if len(vec) != table.dim:
                raise EmbeddingFormatError(
                    "embedding for %r has length %d, table dim is %d" % (sid, len(vec), table.dim)
                )
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(vec.tobytes())


def assemble(segment_feats, embedding=None, schema=None, segment_id=""):
    """Concatenate per-block vectors in schema order into a FeatureVector.

    The provided blocks must match the schema exactly: no missing, no extra,
    no dimension drift. An embedding vector, when the schema demands one, is
    passed separately (it comes from the sidecar, not from dsp).
    """
    if schema is None:
        raise SchemaError("assemble requires a schema")
    provided = dict(segment_feats)
    if embedding is not None:
        provided["embedding"] = embedding
    schema_names = set(schema.names())
    extra = sorted(set(provided) - schema_names)
    if extra:
        raise SchemaError("blocks not in schema: %s" % ", ".join(extra))
    parts = []
    for name, dim in schema.blocks:
        if name not in provided:
            raise SchemaError("missing block %r required by schema" % name)
        vec = np.asarray(provided[name], dtype=np.float64).ravel()
        if len(vec) != dim:
            raise SchemaError("block %r has dimension %d, schema says %d" % (name, len(vec), dim))
        parts.append(vec)
    values = np.concatenate(parts)
    if not np.all(np.isfinite(values)):
        raise SchemaError("non-finite feature values for segment %r" % segment_id)
    return FeatureVector(values=values, schema=schema, segment_id=segment_id)


def fit_scaler(X):
    """Per-column mean and population std; zero-variance columns get std 1."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise SchemaError("fit_scaler needs a non-empty n x d matrix")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds < 1e-12, 1.0, stds)
    return ScalerParams(means=means, stds=stds)


def transform(params, x):
    """(x - means) / stds, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != len(params.means):
        raise SchemaError(
            "vector length %d does not match scaler length %d" % (x.shape[-1], len(params.means))
        )
    return (x - params.means) / params.stds


def csv_header(schema):
    """Column names for a feature CSV: segment_id then <block>_<i> per dim."""
    cols = ["segment_id"]
    for name, dim in schema.blocks:
        cols.extend("%s_%d" % (name, i) for i in range(dim))
    return cols
