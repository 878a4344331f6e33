import numpy as np
import pytest

from crydetect.audio_io import AudioSegment, DatasetManifest, load_manifest, write_wav
from crydetect.errors import ConfigError, ModelFormatError, SchemaError, TrainingError
from crydetect.features import EmbeddingTable
from crydetect.pipeline import (
    DEFAULT_CONFIG,
    ablate,
    build_schema,
    load_model,
    predict_pipeline,
    resolve_config,
    save_model,
    train_pipeline,
)


@pytest.fixture(scope="module")
def trained20(corpus20):
    manifest = load_manifest(corpus20)
    result = train_pipeline(manifest, config=resolve_config({"n_trees": 50}))
    return manifest, result


class TestResolveConfig:
    def test_defaults(self):
        cfg = resolve_config()
        assert cfg == DEFAULT_CONFIG
        assert cfg is not DEFAULT_CONFIG

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="n_treez"):
            resolve_config({"n_treez": 10})

    def test_int_coerced_to_float(self):
        cfg = resolve_config({"band_low": 250})
        assert cfg["band_low"] == 250.0
        assert isinstance(cfg["band_low"], float)

    def test_bool_rejected_for_numeric(self):
        with pytest.raises(ConfigError):
            resolve_config({"n_trees": True})

    def test_band_order_enforced(self):
        with pytest.raises(ConfigError):
            resolve_config({"band_low": 4000.0})

    def test_band_must_fit_under_nyquist(self):
        with pytest.raises(ConfigError):
            resolve_config({"band_high": 9000.0})

    def test_hop_cannot_exceed_frame(self):
        with pytest.raises(ConfigError):
            resolve_config({"hop": 800})

    def test_bad_classifier(self):
        with pytest.raises(ConfigError):
            resolve_config({"classifier": "forest"})

    def test_duplicate_blocks_rejected(self):
        with pytest.raises(ConfigError):
            resolve_config({"blocks": ["mfcc", "mfcc"]})

    def test_override_sticks(self):
        cfg = resolve_config({"n_trees": 7, "classifier": "svm_linear"})
        assert cfg["n_trees"] == 7
        assert cfg["classifier"] == "svm_linear"


class TestBuildSchema:
    def test_classical_dims(self):
        schema = build_schema(resolve_config())
        assert schema.blocks == [("mfcc", 40), ("chroma", 24), ("contrast", 14)]

    def test_embedding_needs_dim(self):
        cfg = resolve_config({"blocks": ["mfcc", "embedding"]})
        with pytest.raises(SchemaError):
            build_schema(cfg)
        schema = build_schema(cfg, embedding_dim=768)
        assert schema.blocks[-1] == ("embedding", 768)


class TestTrain:
    def test_train_fits_and_reports(self, trained20):
        manifest, result = trained20
        assert result.train_accuracy >= 0.9
        # every synthetic segment sits well above the -50 dBFS gate, hums
        # included (their 240 Hz harmonic leaks through the band edge)
        assert result.silent_ids == []
        assert result.used_ids == [e.id for e in manifest.subset("train")]
        assert set(result.train_scores) == set(result.used_ids)

    def test_silent_train_segment_reported(self, corpus20, tmp_path):
        import csv

        manifest = load_manifest(corpus20)
        quiet = str(tmp_path / "quiet0.wav")
        write_wav(quiet, AudioSegment(np.zeros(16000), 16000, "quiet0"))
        rows = [[e.id, e.path, e.label, e.participant, e.split] for e in manifest.subset("train")]
        rows.append(["quiet0", quiet, 0, "P00", "train"])
        mpath = tmp_path / "manifest.csv"
        with open(mpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "path", "label", "participant", "split"])
            w.writerows(rows)
        result = train_pipeline(load_manifest(mpath), config=resolve_config({"n_trees": 5}))
        assert result.silent_ids == ["quiet0"]
        assert "quiet0" not in result.used_ids

    def test_all_silent_is_an_error(self, tmp_path):
        import csv

        rows = []
        for i in range(4):
            sid = "z%d" % i
            path = str(tmp_path / (sid + ".wav"))
            write_wav(path, AudioSegment(np.zeros(16000), 16000, sid))
            rows.append([sid, path, i % 2, "P0", "train"])
        mpath = tmp_path / "manifest.csv"
        with open(mpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "path", "label", "participant", "split"])
            w.writerows(rows)
        manifest = load_manifest(mpath)
        with pytest.raises(TrainingError, match="silent"):
            train_pipeline(manifest)

    def test_missing_embedding_names_segment(self, corpus20, rng):
        manifest = load_manifest(corpus20)
        train_ids = [e.id for e in manifest.subset("train")]
        table = EmbeddingTable(8, {
            sid: rng.normal(size=8).astype(np.float32) for sid in train_ids if sid != "s0001"
        })
        cfg = resolve_config({"blocks": ["mfcc", "embedding"], "n_trees": 5})
        with pytest.raises(SchemaError, match="s0001"):
            train_pipeline(manifest, embeddings=table, config=cfg)

    def test_embedding_block_trains(self, corpus20, rng):
        manifest = load_manifest(corpus20)
        ids = [e.id for e in manifest.entries]
        table = EmbeddingTable(8, {sid: rng.normal(size=8).astype(np.float32) for sid in ids})
        cfg = resolve_config({"blocks": ["mfcc", "embedding"], "n_trees": 20})
        result = train_pipeline(manifest, embeddings=table, config=cfg)
        assert result.model.schema.blocks[-1] == ("embedding", 8)
        assert result.train_accuracy >= 0.9


class TestPredict:
    def test_silent_input_short_circuits(self, trained20, tmp_path, monkeypatch):
        _, result = trained20
        path = str(tmp_path / "quiet.wav")
        write_wav(path, AudioSegment(np.zeros(16000), 16000, "quiet"))

        calls = []
        real = result.model.classifier.decision_scores

        def counting(X):
            calls.append(X.shape)
            return real(X)

        monkeypatch.setattr(result.model.classifier, "decision_scores", counting)
        preds = predict_pipeline(result.model, path)
        assert len(preds) == 1
        p = preds[0]
        assert (p.segment_id, p.score, p.label, p.silenced) == ("quiet", 0.0, 0, True)
        assert calls == []

    def test_train_scores_reproduced(self, trained20):
        manifest, result = trained20
        preds = predict_pipeline(result.model, DatasetManifest(manifest.subset("train")))
        by_id = {p.segment_id: p for p in preds}
        for sid, score in result.train_scores.items():
            assert by_id[sid].score == score
            assert not by_id[sid].silenced

    def test_single_path_target(self, trained20, corpus20):
        manifest, result = trained20
        entry = manifest.subset("test")[0]
        preds = predict_pipeline(result.model, entry.path)
        assert len(preds) == 1
        assert preds[0].label in (0, 1)

    def test_labels_follow_scores(self, trained20):
        manifest, result = trained20
        preds = predict_pipeline(result.model, DatasetManifest(manifest.subset("test")))
        for p in preds:
            if not p.silenced:
                assert p.label == (1 if p.score > 0.5 else 0)


class TestAblate:
    def test_three_subsets(self, corpus20):
        manifest = load_manifest(corpus20)
        cfg = resolve_config({"n_trees": 10})
        rows = ablate(manifest, None, cfg, [["mfcc"], ["chroma"], ["mfcc", "chroma"]])
        assert [r[0] for r in rows] == ["mfcc", "chroma", "mfcc+chroma"]
        for _, acc, f1 in rows:
            assert 0.0 <= acc <= 1.0
            assert 0.0 <= f1 <= 1.0

    def test_duplicate_subset_rows_identical(self, corpus20):
        manifest = load_manifest(corpus20)
        cfg = resolve_config({"n_trees": 10})
        rows = ablate(manifest, None, cfg, [["mfcc"], ["mfcc"]])
        assert rows[0] == rows[1]

    def test_unknown_block_rejected(self, corpus20):
        manifest = load_manifest(corpus20)
        with pytest.raises(ConfigError):
            ablate(manifest, None, None, [["spectrogram"]])


class TestPersistence:
    def test_round_trip_bit_exact(self, trained20, tmp_path, rng):
        _, result = trained20
        path = tmp_path / "m.cryd"
        save_model(result.model, path)
        loaded = load_model(path)

        assert loaded.schema.blocks == result.model.schema.blocks
        assert loaded.classifier_kind == result.model.classifier_kind
        assert loaded.preprocessing == result.model.preprocessing
        np.testing.assert_array_equal(loaded.scaler.means, result.model.scaler.means)
        np.testing.assert_array_equal(loaded.scaler.stds, result.model.scaler.stds)
        X = rng.normal(size=(100, result.model.schema.total_dim))
        np.testing.assert_array_equal(
            loaded.classifier.decision_scores(X), result.model.classifier.decision_scores(X)
        )

    def test_svm_round_trips(self, corpus20, tmp_path, rng):
        manifest = load_manifest(corpus20)
        for kind in ("svm_linear", "svm_rbf"):
            result = train_pipeline(manifest, config=resolve_config({"classifier": kind}))
            path = tmp_path / (kind + ".cryd")
            save_model(result.model, path)
            loaded = load_model(path)
            X = rng.normal(size=(20, result.model.schema.total_dim))
            np.testing.assert_array_equal(
                loaded.classifier.decision_scores(X), result.model.classifier.decision_scores(X)
            )

    def test_save_is_deterministic(self, trained20, tmp_path):
        _, result = trained20
        p1, p2 = tmp_path / "a.cryd", tmp_path / "b.cryd"
        save_model(result.model, p1)
        save_model(result.model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_retrain_same_seed_identical_bytes(self, corpus20, tmp_path):
        manifest = load_manifest(corpus20)
        cfg = resolve_config({"n_trees": 10})
        p1, p2 = tmp_path / "a.cryd", tmp_path / "b.cryd"
        save_model(train_pipeline(manifest, config=cfg).model, p1)
        save_model(train_pipeline(manifest, config=cfg).model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_workers_do_not_change_bytes(self, corpus20, tmp_path):
        manifest = load_manifest(corpus20)
        p1, p2 = tmp_path / "a.cryd", tmp_path / "b.cryd"
        save_model(train_pipeline(manifest, config=resolve_config({"n_trees": 10, "workers": 1})).model, p1)
        save_model(train_pipeline(manifest, config=resolve_config({"n_trees": 10, "workers": 4})).model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupt_payload_detected(self, trained20, tmp_path):
        _, result = trained20
        path = tmp_path / "m.cryd"
        save_model(result.model, path)
        blob = bytearray(path.read_bytes())
        blob[30] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError, match="checksum"):
            load_model(path)

    def test_unsupported_version(self, trained20, tmp_path):
        _, result = trained20
        path = tmp_path / "m.cryd"
        save_model(result.model, path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFormatError, match="version"):
            load_model(path)

    def test_truncated_file(self, trained20, tmp_path):
        _, result = trained20
        path = tmp_path / "m.cryd"
        save_model(result.model, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ModelFormatError, match="length"):
            load_model(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.cryd"
        path.write_bytes(b"JUNKJUNKJUNKJUNKJUNK")
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(path)
