"""Datasets that can be produced without network access.

``waveform5000`` regenerates Breiman's waveform data (21 noisy mixtures of
two triangular base waves plus 19 pure-noise attributes) and binarizes it as
OpenML 979 does: the original class 0 is positive. ``keel_phoneme`` reads the
ELENA phoneme table shipped with the ``keel-ds`` package, the same 5404 rows
as OpenML 1489.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..errors import FetchError
from .dataset import TabularDataset, from_arrays

_BASE_WAVES = np.array([
    [max(6 - abs(i - 6), 0) for i in range(21)],
    [max(6 - abs(i - 14), 0) for i in range(21)],
    [max(6 - abs(i - 10), 0) for i in range(21)],
], dtype=np.float64)
# class -> the two base waves it mixes
_MIXTURES = {0: (0, 1), 1: (0, 2), 2: (1, 2)}


def waveform(n_rows: int = 5000, seed: int = 979, noise_attributes: int = 19) -> tuple[np.ndarray, np.ndarray]:
    """Raw waveform features and 3-class labels."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, size=n_rows)
    u = rng.random(n_rows)[:, None]
    first = np.array([_MIXTURES[c][0] for c in y])
    second = np.array([_MIXTURES[c][1] for c in y])
    signal = u * _BASE_WAVES[first] + (1 - u) * _BASE_WAVES[second]
    x = np.concatenate([signal + rng.normal(size=signal.shape),
                        rng.normal(size=(n_rows, noise_attributes))], axis=1)
    return x, y


def waveform5000(seed: int = 979) -> TabularDataset:
    x, y = waveform(5000, seed)
    # label 1 for the original class 0, matching OpenML's positive class
    ds = from_arrays(x, (y == 0).astype(np.int64), classes=["N", "P"], name="waveform-5000")
    ds.provenance = {"source": "generator:waveform5000", "seed": seed}
    return ds


def keel_phoneme() -> TabularDataset:
    try:
        ref = resources.files("keel_ds") / "data" / "balanced" / "raw" / "phoneme.dat"
        text = ref.read_text()
    except (ModuleNotFoundError, FileNotFoundError) as exc:
        raise FetchError(f"keel-ds package with phoneme data is not installed: {exc}") from None
    rows = [line.split(",") for line in text.splitlines() if line.strip() and not line.startswith("@")]
    data = np.array(rows, dtype=np.float64)
    labels = data[:, -1].astype(np.int64)
    ds = from_arrays(data[:, :-1], labels, [f"V{j}" for j in range(1, 6)], classes=["1", "2"], name="phoneme")
    ds.provenance = {"source": "keel:phoneme"}
    return ds


OFFLINE_SOURCES = {
    "generator:waveform5000": waveform5000,
    "keel:phoneme": keel_phoneme,
}
