"""End-to-end orchestration: train, predict, ablate, persist.

A trained pipeline bundles preprocessing parameters, the feature schema,
the fitted scaler and the classifier, and serializes to a single
checksummed container whose bytes are a pure function of training inputs
and seed. Feature extraction fans out across worker threads; results are
always collated in manifest order, so worker count never changes output.
"""

import json
import os
import struct
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dsp, features, models
from .audio_io import AudioSegment, DatasetManifest, ManifestEntry, read_wav, resample
from .errors import ConfigError, ModelFormatError, SchemaError, TrainingError

MODEL_MAGIC = b"CRYD"
MODEL_FORMAT_VERSION = 1

DEFAULT_CONFIG = {
    "sample_rate": 16000,
    "band_low": 300.0,
    "band_high": 3000.0,
    "silence_dbfs": -50.0,
    "frame_length": 400,
    "hop": 160,
    "n_mfcc": 20,
    "n_mels": 40,
    "contrast_bands": 6,
    "contrast_alpha": 0.02,
    "blocks": ["mfcc", "chroma", "contrast"],
    "classifier": "gbm",
    "n_trees": 100,
    "learning_rate": 0.1,
    "max_depth": 3,
    "min_samples_leaf": 1,
    "svm_c": 1.0,
    "rbf_gamma": "auto",
    "svm_epochs": 50,
    "seed": 0,
    "workers": 1,
    "rope": 0.0,
    "n_mc": 50000,
    "allow_split_overlap": False,
    "drop_silent_train": True,
    "gate_silent_predict": True,
}

_VALIDATORS = {
    "sample_rate": lambda v: isinstance(v, int) and v > 0,
    "band_low": lambda v: isinstance(v, (int, float)) and v > 0,
    "band_high": lambda v: isinstance(v, (int, float)) and v > 0,
    "silence_dbfs": lambda v: isinstance(v, (int, float)),
    "frame_length": lambda v: isinstance(v, int) and v > 0,
    "hop": lambda v: isinstance(v, int) and v > 0,
    "n_mfcc": lambda v: isinstance(v, int) and v > 0,
    "n_mels": lambda v: isinstance(v, int) and v > 0,
    "contrast_bands": lambda v: isinstance(v, int) and v > 0,
    "contrast_alpha": lambda v: isinstance(v, (int, float)) and 0 < v <= 1,
    "blocks": lambda v: (
        isinstance(v, list) and len(v) > 0
        and all(b in features.BLOCK_NAMES for b in v)
        and len(set(v)) == len(v)
    ),
    "classifier": lambda v: v in ("gbm", "svm_linear", "svm_rbf"),
    "n_trees": lambda v: isinstance(v, int) and v >= 0,
    "learning_rate": lambda v: isinstance(v, (int, float)) and 0 < v <= 1,
    "max_depth": lambda v: isinstance(v, int) and v >= 1,
    "min_samples_leaf": lambda v: isinstance(v, int) and v >= 1,
    "svm_c": lambda v: isinstance(v, (int, float)) and v > 0,
    "rbf_gamma": lambda v: v == "auto" or (isinstance(v, (int, float)) and v > 0),
    "svm_epochs": lambda v: isinstance(v, int) and v >= 1,
    "seed": lambda v: isinstance(v, int) and 0 <= v < 2**64,
    "workers": lambda v: isinstance(v, int) and v >= 1,
    "rope": lambda v: isinstance(v, (int, float)) and v >= 0,
    "n_mc": lambda v: isinstance(v, int) and v >= 1,
    "allow_split_overlap": lambda v: isinstance(v, bool),
    "drop_silent_train": lambda v: isinstance(v, bool),
    "gate_silent_predict": lambda v: isinstance(v, bool),
}


def resolve_config(overrides=None):
    """Merge overrides onto defaults; reject unknown keys and bad values."""
    cfg = dict(DEFAULT_CONFIG)
    for key, value in (overrides or {}).items():
        if key not in cfg:
            raise ConfigError("unknown config key %r" % key)
        if isinstance(value, bool) and not isinstance(cfg[key], bool):
            raise ConfigError("config key %r has invalid value %r" % (key, value))
        if isinstance(cfg[key], float) and isinstance(value, int):
            value = float(value)
        cfg[key] = value
    for key, check in _VALIDATORS.items():
        if not check(cfg[key]):
            raise ConfigError("config key %r has invalid value %r" % (key, cfg[key]))
    if not cfg["band_low"] < cfg["band_high"] < cfg["sample_rate"] / 2:
        raise ConfigError("need band_low < band_high < sample_rate/2")
    if cfg["hop"] > cfg["frame_length"]:
        raise ConfigError("hop must not exceed frame_length")
    if cfg["n_mfcc"] > cfg["n_mels"]:
        raise ConfigError("n_mfcc must not exceed n_mels")
    return cfg


def block_dims(cfg):
    """Per-block segment-vector dimensions (mean+std doubles the frame dim)."""
    return {
        "mfcc": 2 * cfg["n_mfcc"],
        "chroma": 2 * 12,
        "contrast": 2 * (cfg["contrast_bands"] + 1),
    }


def build_schema(cfg, embedding_dim=None):
    dims = block_dims(cfg)
    blocks = []
    for name in cfg["blocks"]:
        if name == "embedding":
            if embedding_dim is None:
                raise SchemaError("schema demands an embedding block but no sidecar table was given")
            blocks.append(("embedding", int(embedding_dim)))
        else:
            blocks.append((name, dims[name]))
    return features.FeatureSchema(blocks)


@dataclass
class PipelineModel:
    preprocessing: dict
    schema: features.FeatureSchema
    scaler: features.ScalerParams
    classifier: object
    classifier_kind: str
    format_version: int = MODEL_FORMAT_VERSION


@dataclass
class Prediction:
    segment_id: str
    score: float
    label: int
    silenced: bool


@dataclass
class TrainResult:
    model: PipelineModel
    train_scores: dict  # segment id -> training-time decision score
    used_ids: list
    silent_ids: list
    train_accuracy: float


def _segment_blocks(path, segment_id, cfg):
    """Decode one file and compute its classical feature blocks.

    Returns (blocks dict or None if gated silent, rms_dbfs). Pure function
    of (file bytes, cfg); safe to run on worker threads.
    """
    seg = read_wav(path)
    seg.id = segment_id
    if seg.duration > 5.0 + 1e-9:
        warnings.warn("segment %s is %.2f s long; the pipeline expects <= 5 s clips" % (segment_id, seg.duration))
    seg = resample(seg, cfg["sample_rate"])
    seg = dsp.bandpass(seg, cfg["band_low"], cfg["band_high"])
    silent, rms_dbfs = dsp.is_silent(seg, cfg["silence_dbfs"])
    if silent:
        return None, rms_dbfs
    spec = dsp.stft(seg, cfg["frame_length"], cfg["hop"])
    blocks = {}
    if "mfcc" in cfg["blocks"]:
        blocks["mfcc"] = features.aggregate(dsp.mfcc(spec, cfg["n_mfcc"], cfg["n_mels"]))
    if "chroma" in cfg["blocks"]:
        blocks["chroma"] = features.aggregate(dsp.chroma(spec))
    if "contrast" in cfg["blocks"]:
        blocks["contrast"] = features.aggregate(
            dsp.spectral_contrast(spec, cfg["contrast_bands"], cfg["contrast_alpha"])
        )
    return blocks, rms_dbfs


def _extract_all(entries, cfg, workers):
    """Blocks for every entry, in entry order regardless of worker count."""
    def job(entry):
        return _segment_blocks(entry.path, entry.id, cfg)

    if workers <= 1:
        return [job(e) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, entries))


def _lookup_embedding(table, segment_id):
    if table is None or segment_id not in table:
        raise SchemaError("segment %r has no embedding in the sidecar table" % segment_id)
    return table[segment_id]


def _make_train_config(cfg):
    return models.TrainConfig(
        n_trees=cfg["n_trees"],
        learning_rate=cfg["learning_rate"],
        max_depth=cfg["max_depth"],
        min_samples_leaf=cfg["min_samples_leaf"],
        svm_c=cfg["svm_c"],
        rbf_gamma=cfg["rbf_gamma"],
        svm_epochs=cfg["svm_epochs"],
        seed=cfg["seed"],
    )


def _train_classifier(kind, X, y, cfg):
    tc = _make_train_config(cfg)
    if kind == "gbm":
        return models.gbm_train(X, y, tc)
    if kind == "svm_linear":
        return models.svm_linear_train(X, y, tc)
    if kind == "svm_rbf":
        return models.svm_rbf_train(X, y, tc)
    raise ConfigError("unknown classifier %r" % kind)


def _labels_from_scores(kind, scores):
    # GBM emits probabilities (threshold 0.5); SVMs emit raw margins (threshold 0)
    cut = 0.5 if kind == "gbm" else 0.0
    return (np.asarray(scores) > cut).astype(int)


def train_pipeline(manifest, embeddings=None, config=None):
    """Fit the full pipeline on the manifest's train split.

    Silent segments (post-bandpass RMS under the gate) are excluded from
    fitting when drop_silent_train is set and reported in the result, so
    data loss is never silent. Features are extracted once, scaled with a
    scaler fit on the training matrix only, and fed to the configured
    classifier.
    """
    cfg = resolve_config(config) if not _is_resolved(config) else config
    entries = manifest.subset("train")
    if not entries:
        raise TrainingError("manifest has no train split entries")
    schema = build_schema(cfg, embeddings.dim if embeddings is not None and "embedding" in cfg["blocks"] else None)

    extracted = _extract_all(entries, cfg, cfg["workers"])
    used, silent_ids, rows = [], [], []
    for entry, (blocks, _rms) in zip(entries, extracted):
        if blocks is None and cfg["drop_silent_train"]:
            silent_ids.append(entry.id)
            continue
        if blocks is None:
            # silent but kept: features of a silent segment are the floored
            # constants; recompute without the gate by building zero blocks
            blocks = _silent_blocks(cfg)
        emb = _lookup_embedding(embeddings, entry.id) if "embedding" in cfg["blocks"] else None
        fv = features.assemble(blocks, embedding=emb, schema=schema, segment_id=entry.id)
        rows.append(fv.values)
        used.append(entry)
    if not rows:
        raise TrainingError("no usable training segments (all %d were silent)" % len(entries))

    X = np.vstack(rows)
    y = np.array([e.label for e in used])
    scaler = features.fit_scaler(X)
    Xs = features.transform(scaler, X)
    classifier = _train_classifier(cfg["classifier"], Xs, y, cfg)
    scores = classifier.decision_scores(Xs)
    labels = _labels_from_scores(cfg["classifier"], scores)

    preprocessing = {k: cfg[k] for k in (
        "sample_rate", "band_low", "band_high", "silence_dbfs", "frame_length",
        "hop", "n_mfcc", "n_mels", "contrast_bands", "contrast_alpha",
        "gate_silent_predict",
    )}
    model = PipelineModel(
        preprocessing=preprocessing,
        schema=schema,
        scaler=scaler,
        classifier=classifier,
        classifier_kind=cfg["classifier"],
    )
    return TrainResult(
        model=model,
        train_scores={e.id: float(s) for e, s in zip(used, scores)},
        used_ids=[e.id for e in used],
        silent_ids=silent_ids,
        train_accuracy=float(np.mean(labels == y)),
    )


def _is_resolved(config):
    return isinstance(config, dict) and set(config) == set(DEFAULT_CONFIG)


def _silent_blocks(cfg):
    """Feature blocks of an exactly-zero signal (used only when silent
    segments are retained for training)."""
    n = 5 * cfg["sample_rate"]
    seg = AudioSegment(np.zeros(n), cfg["sample_rate"], "")
    spec = dsp.stft(seg, cfg["frame_length"], cfg["hop"])
    blocks = {}
    if "mfcc" in cfg["blocks"]:
        blocks["mfcc"] = features.aggregate(dsp.mfcc(spec, cfg["n_mfcc"], cfg["n_mels"]))
    if "chroma" in cfg["blocks"]:
        blocks["chroma"] = features.aggregate(dsp.chroma(spec))
    if "contrast" in cfg["blocks"]:
        blocks["contrast"] = features.aggregate(
            dsp.spectral_contrast(spec, cfg["contrast_bands"], cfg["contrast_alpha"])
        )
    return blocks


def _cfg_from_model(model):
    cfg = dict(DEFAULT_CONFIG)
    cfg.update(model.preprocessing)
    cfg["blocks"] = model.schema.names()
    return cfg


def predict_pipeline(model, target, embeddings=None, workers=1):
    """Predict for a manifest (all entries) or a single WAV path.

    Silent segments short-circuit: score 0.0, label 0, silenced=True, and
    the classifier is never invoked for them.
    """
    if isinstance(target, DatasetManifest):
        entries = list(target.entries)
    elif isinstance(target, ManifestEntry):
        entries = [target]
    else:
        stem = os.path.splitext(os.path.basename(str(target)))[0]
        entries = [ManifestEntry(id=stem, path=str(target), label=0, participant="", split="test")]

    cfg = _cfg_from_model(model)
    extracted = _extract_all(entries, cfg, workers)

    rows, row_entries = [], []
    predictions = [None] * len(entries)
    for pos, (entry, (blocks, _rms)) in enumerate(zip(entries, extracted)):
        if blocks is None:
            if model.preprocessing.get("gate_silent_predict", True):
                predictions[pos] = Prediction(entry.id, 0.0, 0, True)
                continue
            blocks = _silent_blocks(cfg)
        emb = _lookup_embedding(embeddings, entry.id) if "embedding" in cfg["blocks"] else None
        fv = features.assemble(blocks, embedding=emb, schema=model.schema, segment_id=entry.id)
        rows.append(features.transform(model.scaler, fv.values))
        row_entries.append(pos)

    if rows:
        X = np.vstack(rows)
        scores = model.classifier.decision_scores(X)
        labels = _labels_from_scores(model.classifier_kind, scores)
        for pos, score, label in zip(row_entries, scores, labels):
            predictions[pos] = Prediction(entries[pos].id, float(score), int(label), False)
    return predictions


def ablate(manifest, embeddings, config, subsets):
    """Train and evaluate one pipeline per feature-block subset.

    Returns rows of (subset_name, accuracy, weighted_f1) computed on the
    manifest's test split. Duplicate subsets produce identical rows because
    training is deterministic.
    """
    from .eval import classification_report

    base = resolve_config(config) if not _is_resolved(config) else dict(config)
    test_entries = manifest.subset("test")
    if not test_entries:
        raise TrainingError("ablation needs a non-empty test split")
    rows = []
    for subset in subsets:
        subset = list(subset)
        if not subset:
            raise ConfigError("empty feature subset")
        cfg = dict(base)
        cfg["blocks"] = subset
        cfg = resolve_config({k: v for k, v in cfg.items()})
        result = train_pipeline(manifest, embeddings, cfg)
        preds = predict_pipeline(result.model, DatasetManifest(test_entries), embeddings, cfg["workers"])
        pred_labels = np.array([p.label for p in preds])
        true_labels = np.array([e.label for e in test_entries])
        report = classification_report(pred_labels, true_labels)
        rows.append(("+".join(subset), report.accuracy, report.weighted_f1))
    return rows


# ---------------------------------------------------------------------------
# persistence: CRYD container with hex floats and a CRC32 trailer

def _hex(x):
    return float(x).hex()


def _unhex(s):
    return float.fromhex(s)


def _tree_to_obj(node):
    if node.is_leaf:
        return {"v": _hex(node.value)}
    return {
        "f": int(node.feature_index),
        "t": _hex(node.threshold),
        "l": _tree_to_obj(node.left),
        "r": _tree_to_obj(node.right),
    }


def _tree_from_obj(obj):
    if "v" in obj:
        return models.TreeNode(value=_unhex(obj["v"]))
    return models.TreeNode(
        feature_index=int(obj["f"]),
        threshold=_unhex(obj["t"]),
        left=_tree_from_obj(obj["l"]),
        right=_tree_from_obj(obj["r"]),
    )


def _classifier_to_obj(kind, clf):
    if kind == "gbm":
        return {
            "base_score": _hex(clf.base_score),
            "learning_rate": _hex(clf.learning_rate),
            "schema_dim": int(clf.schema_dim),
            "trees": [_tree_to_obj(t) for t in clf.trees],
        }
    if kind == "svm_linear":
        return {"weights": [_hex(v) for v in clf.weights], "bias": _hex(clf.bias)}
    if kind == "svm_rbf":
        return {
            "support_vectors": [[_hex(v) for v in row] for row in clf.support_vectors],
            "dual_coefs": [_hex(v) for v in clf.dual_coefs],
            "bias": _hex(clf.bias),
            "gamma": _hex(clf.gamma),
        }
    raise ModelFormatError("unknown classifier kind %r" % kind)


def _classifier_from_obj(kind, obj):
    if kind == "gbm":
        return models.GbmModel(
            base_score=_unhex(obj["base_score"]),
            trees=[_tree_from_obj(t) for t in obj["trees"]],
            learning_rate=_unhex(obj["learning_rate"]),
            schema_dim=int(obj["schema_dim"]),
        )
    if kind == "svm_linear":
        return models.LinearSvmModel(np.array([_unhex(v) for v in obj["weights"]]), _unhex(obj["bias"]))
    if kind == "svm_rbf":
        sv = np.array([[_unhex(v) for v in row] for row in obj["support_vectors"]])
        if sv.size == 0:
            sv = sv.reshape(0, 0)
        return models.RbfSvmModel(
            sv,
            np.array([_unhex(v) for v in obj["dual_coefs"]]),
            _unhex(obj["bias"]),
            _unhex(obj["gamma"]),
        )
    raise ModelFormatError("unknown classifier kind %r" % kind)


def _preprocessing_to_obj(pre):
    out = {}
    for k, v in pre.items():
        out[k] = _hex(v) if isinstance(v, float) else v
    return out


def _preprocessing_from_obj(obj):
    out = {}
    for k, v in obj.items():
        out[k] = _unhex(v) if isinstance(v, str) and ("0x" in v or v in ("inf", "-inf", "nan")) else v
    return out


def save_model(model, path):
    """Write the pipeline to a single checksummed file, byte-deterministic."""
    payload_obj = {
        "format_version": int(model.format_version),
        "classifier_kind": model.classifier_kind,
        "preprocessing": _preprocessing_to_obj(model.preprocessing),
        "schema": [[name, dim] for name, dim in model.schema.blocks],
        "scaler": {
            "means": [_hex(v) for v in model.scaler.means],
            "stds": [_hex(v) for v in model.scaler.stds],
        },
        "classifier": _classifier_to_obj(model.classifier_kind, model.classifier),
    }
    payload = json.dumps(payload_obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_model(path):
    """Read a saved pipeline; magic, version, length and CRC are all checked."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ModelFormatError("bad magic %r (expected %r)" % (blob[:4], MODEL_MAGIC))
    if len(blob) < 16:
        raise ModelFormatError("file truncated: %d bytes" % len(blob))
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError("unsupported format_version %d (this build reads %d)" % (version, MODEL_FORMAT_VERSION))
    (payload_len,) = struct.unpack_from("<Q", blob, 8)
    if len(blob) != 16 + payload_len + 4:
        raise ModelFormatError(
            "payload length mismatch: header says %d, file holds %d" % (payload_len, len(blob) - 20)
        )
    payload = blob[16:16 + payload_len]
    (crc,) = struct.unpack_from("<I", blob, 16 + payload_len)
    if zlib.crc32(payload) != crc:
        raise ModelFormatError("payload checksum mismatch; file is corrupt")
    obj = json.loads(payload.decode("utf-8"))
    schema = features.FeatureSchema([(name, dim) for name, dim in obj["schema"]])
    scaler = features.ScalerParams(
        means=np.array([_unhex(v) for v in obj["scaler"]["means"]]),
        stds=np.array([_unhex(v) for v in obj["scaler"]["stds"]]),
    )
    kind = obj["classifier_kind"]
    return PipelineModel(
        preprocessing=_preprocessing_from_obj(obj["preprocessing"]),
        schema=schema,
        scaler=scaler,
        classifier=_classifier_from_obj(kind, obj["classifier"]),
        classifier_kind=kind,
        format_version=int(obj["format_version"]),
    )
