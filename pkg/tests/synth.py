"""Synthetic desk-scale corpus generator used by the test suite.

"Cry" segments are harmonic stacks whose fundamental sweeps inside
350-600 Hz with 4 harmonics and 4 Hz amplitude modulation; "not-cry"
segments are pink noise or 120 Hz mains hum at matched RMS. Each fake
participant gets a preferred fundamental range so train/test splits by
participant are meaningful. The generator is deliberately part of the test
harness, not the library API.

Run directly to build a corpus on disk:

    python tests/synth.py --out /tmp/corpus --segments 200
"""

import argparse
import csv
import os

import numpy as np

SR = 16000
DURATION = 5.0


def _normalize_rms(x, rms_target):
    rms = np.sqrt(np.mean(x**2))
    return x * (rms_target / max(rms, 1e-12))


def cry_signal(rng, f0_lo, f0_hi, sr=SR, duration=DURATION):
    """Harmonic stack with a swept fundamental and 4 Hz tremolo."""
    n = int(sr * duration)
    t = np.arange(n) / sr
    f_start = rng.uniform(f0_lo, f0_hi)
    f_end = rng.uniform(f0_lo, f0_hi)
    f0 = f_start + (f_end - f_start) * (t / duration)
    phase = 2.0 * np.pi * np.cumsum(f0) / sr
    x = np.zeros(n)
    for h in range(1, 5):
        x += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
    am = 1.0 + 0.5 * np.sin(2.0 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
    return x * am


def pink_noise(rng, sr=SR, duration=DURATION):
    """1/f-shaped noise via spectral weighting of white noise."""
    n = int(sr * duration)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, 1.0 / sr)
    f[0] = f[1]
    spectrum /= np.sqrt(f)
    return np.fft.irfft(spectrum, n)


def hum_signal(rng, sr=SR, duration=DURATION):
    """120 Hz mains hum with a weak second harmonic and a little hiss."""
    n = int(sr * duration)
    t = np.arange(n) / sr
    x = np.sin(2.0 * np.pi * 120.0 * t + rng.uniform(0, 2 * np.pi))
    x += 0.25 * np.sin(2.0 * np.pi * 240.0 * t + rng.uniform(0, 2 * np.pi))
    x += 0.02 * rng.standard_normal(n)
    return x


def make_corpus(root, n_segments=200, n_participants=8, n_test_participants=2, seed=0, rms_dbfs=-20.0):
    """Write WAVs plus a manifest CSV under root; returns the manifest path.

    Half the segments are cries. Not-cry segments alternate pink noise and
    hum (roughly 2:1). Participants are assigned round-robin; the last
    n_test_participants land in the test split.
    """
    from crydetect.audio_io import AudioSegment, write_wav

    os.makedirs(root, exist_ok=True)
    rng = np.random.default_rng(seed)
    rms_target = 10.0 ** (rms_dbfs / 20.0)

    # each participant prefers a sub-range of the 350-600 Hz band
    centers = rng.uniform(420.0, 540.0, size=n_participants)
    rows = []
    for k in range(n_segments):
        participant = k % n_participants
        label = 1 if (k // n_participants) % 2 == 0 else 0
        sid = "s%04d" % k
        if label == 1:
            lo = max(350.0, centers[participant] - 60.0)
            hi = min(600.0, centers[participant] + 60.0)
            x = cry_signal(rng, lo, hi)
        else:
            x = hum_signal(rng) if k % 3 == 0 else pink_noise(rng)
        gain_jitter = 10.0 ** (rng.uniform(-3.0, 3.0) / 20.0)
        x = _normalize_rms(x, rms_target * gain_jitter)
        x = np.clip(x, -1.0, 1.0)
        path = os.path.join(root, sid + ".wav")
        write_wav(path, AudioSegment(x, SR, sid))
        split = "test" if participant >= n_participants - n_test_participants else "train"
        rows.append([sid, path, label, "P%02d" % participant, split])

    manifest_path = os.path.join(root, "manifest.csv")
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "path", "label", "participant", "split"])
        w.writerows(rows)
    return manifest_path


def main():
    ap = argparse.ArgumentParser(description="generate a synthetic cry/not-cry corpus")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--segments", type=int, default=200)
    ap.add_argument("--participants", type=int, default=8)
    ap.add_argument("--test-participants", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    path = make_corpus(args.out, args.segments, args.participants, args.test_participants, args.seed)
    print(path)


if __name__ == "__main__":
    main()
