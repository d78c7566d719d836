"""Synthetic signals and feature bundles for tests."""

from __future__ import annotations

import numpy as np

from mater.dsp import AudioBuffer
from mater.features import FeatureBundle

SR = 16000


def sine(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def noise(seconds=1.0, sr=SR, seed=0, amp=0.3):
    return AudioBuffer(amp * np.random.default_rng(seed).standard_normal(int(round(seconds * sr))), sr)


def pulse_train(spacings, amplitudes=None, sr=SR, lead=200, tail=400):
    """Single-sample impulses separated by ``spacings`` (in samples)."""
    spacings = list(spacings)
    amps = [1.0] * (len(spacings) + 1) if amplitudes is None else list(amplitudes)
    x = np.zeros(lead + int(sum(spacings)) + tail)
    pos = lead
    x[pos] = amps[0]
    for i, s in enumerate(spacings):
        pos += s
        x[pos] = amps[i + 1]
    return AudioBuffer(0.8 * x, sr)


def class_bundles(n=64, n_classes=8, seed=0, sources=("a", "b"), words=5, noise_scale=0.3):
    """Linearly separable bundles: every level carries a class-dependent centre."""
    rng = np.random.default_rng(seed)
    cw = rng.normal(size=(n_classes, 42))
    cu = 2.0 * rng.normal(size=(n_classes, 34))
    ce = {s: rng.normal(size=(n_classes, d)) for s, d in zip(sources, (16, 8, 12))}
    bundles, labels = [], []
    for i in range(n):
        c = i % n_classes
        emb = {}
        for j, s in enumerate(sources):
            frames = 6 if j == 0 else 1
            emb[s] = ce[s][c] + noise_scale * rng.normal(size=(frames, ce[s].shape[1]))
        bundles.append(
            FeatureBundle(
                cw[c] + noise_scale * rng.normal(size=(words, 42)),
                cu[c] + noise_scale * rng.normal(size=34),
                emb,
            )
        )
        labels.append(c)
    return bundles, labels
