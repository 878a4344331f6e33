import csv

import numpy as np
import pytest
from scipy.io import wavfile


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """Locally constructed wav2vec2-style checkpoint, base 768-dim width but
    a single transformer layer so tests stay fast. Seeded so every session
    builds identical weights."""
    import torch
    from transformers import Wav2Vec2Config, Wav2Vec2Model

    path = tmp_path_factory.mktemp("ckpt") / "tiny-w2v2"
    torch.manual_seed(0)
    config = Wav2Vec2Config(
        hidden_size=768,
        num_hidden_layers=1,
        num_attention_heads=12,
        intermediate_size=768,
    )
    Wav2Vec2Model(config).save_pretrained(str(path))
    return str(path)


@pytest.fixture
def make_wav(tmp_path):
    def _make(name, seconds=1.0, rate=16000, freq=440.0, seed=0):
        rng = np.random.default_rng(seed)
        t = np.arange(int(rate * seconds)) / rate
        x = 0.3 * np.sin(2 * np.pi * freq * t) + 0.01 * rng.standard_normal(len(t))
        path = tmp_path / name
        wavfile.write(path, rate, (x * 32767).astype(np.int16))
        return str(path)

    return _make


@pytest.fixture
def make_manifest(tmp_path):
    def _make(rows, name="manifest.csv"):
        path = tmp_path / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "path", "label", "participant", "split"])
            w.writerows(rows)
        return str(path)

    return _make
