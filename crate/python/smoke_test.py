#!/usr/bin/env python3
"""Smoke test for the voiceauth_py extension module.

Build the module first:

    cargo build -p voiceauth-py --release --features extension-module

then run:

    python3 python/smoke_test.py
"""

import math
import os
import random
import shutil
import sys
import tempfile


def import_module():
    """Copies the built cdylib into a temp dir as voiceauth_py.so and imports it."""
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates = [
        os.path.join(root, "target", profile, "libvoiceauth_py.so")
        for profile in ("release", "debug")
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit(
            "libvoiceauth_py.so not found; run "
            "`cargo build -p voiceauth-py --release --features extension-module` first"
        )
    stage = tempfile.mkdtemp(prefix="voiceauth_py_")
    shutil.copy(built, os.path.join(stage, "voiceauth_py.so"))
    sys.path.insert(0, stage)
    import voiceauth_py

    return voiceauth_py


def gaussian_utterance(rng, center, frames, dim):
    return [[center + rng.gauss(0.0, 1.0) for _ in range(dim)] for _ in range(frames)]


def main():
    va = import_module()

    def ok(label, cond):
        if not cond:
            sys.exit(f"FAIL {label}")
        print(f"ok {label}")

    ok("version", isinstance(va.version(), str) and len(va.version()) > 0)
    ok("latency 101 frames = 1.025 s", abs(va.latency(101) - 1.025) < 1e-12)
    ok("latency 1 frame = 0.025 s", abs(va.latency(1) - 0.025) < 1e-12)

    # MFCC on a 1 kHz tone: 1 s at 8 kHz gives 98 frames of dim 39.
    sr = 8000
    samples = [int(0.4 * 32767 * math.sin(2 * math.pi * 1000 * i / sr)) for i in range(sr)]
    frames, energies = va.mfcc(samples, sr)
    ok("mfcc frame count", len(frames) == 98)
    ok("mfcc dim", len(frames[0]) == 39)
    ok("vad aligns", len(va.vad(energies, 80, 0.0)) == 98)

    # Two synthetic speakers, well separated in feature space.
    rng = random.Random(7)
    dim = 8
    spk_a = [gaussian_utterance(rng, 0.0, 300, dim) for _ in range(2)]
    spk_b = [gaussian_utterance(rng, 2.0, 300, dim) for _ in range(2)]

    si = va.Model.kmeans_init(spk_a + spk_b, 1, 2, 11)
    ok("kmeans model shape", si.states == 1 and si.mixtures == 2 and si.dim == dim)
    trace = si.train(spk_a + spk_b, n_w=30, stride=2, iterations=3)
    ok(
        "training trace monotone",
        all(b >= a - 1e-8 * abs(a) for a, b in zip(trace, trace[1:])),
    )

    adapted = si.adapt(spk_a, n_w=30, stride=2)
    ok("adaptation returns a model", adapted.dim == dim)

    pair = va.Pair(adapted, si, 0.0)
    own = gaussian_utterance(rng, 0.0, 200, dim)
    other = gaussian_utterance(rng, 2.0, 200, dim)
    own_scores = [llr for _, llr, _ in pair.authenticate(own, n_w=30)]
    other_scores = [llr for _, llr, _ in pair.authenticate(other, n_w=30)]
    ok("score streams emitted", len(own_scores) == 171 and len(other_scores) == 171)

    weer_pct, threshold = va.weer(own_scores, other_scores)
    ok(f"weer small ({weer_pct:.2f}%)", weer_pct < 10.0)

    pair.threshold = threshold
    ok("own audio mostly accepted", pair.accept_fraction(own, n_w=30) > 0.5)
    ok("impostor mostly rejected", pair.accept_fraction(other, n_w=30) < 0.5)

    # Model round-trip through a file.
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        si.save(path)
        back = va.Model.load(path)
        ok("model round-trip", back.states == 1 and back.mixtures == 2 and back.dim == dim)

        pair_path = os.path.join(d, "pair.json")
        pair.save(pair_path)
        loaded = va.Pair.load(pair_path)
        ok("pair round-trip", abs(loaded.threshold - threshold) < 1e-15)

    print("PASS: voiceauth_py smoke test")


if __name__ == "__main__":
    main()
