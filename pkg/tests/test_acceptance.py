"""Acceptance criteria, one check per criterion.

Run under pytest (a summary line per criterion is printed at the end) or
directly with ``python tests/test_acceptance.py [criterion ...]``.

Trained models are stored under ``$IGNNET_ACCEPTANCE_DIR`` (default
``<dataset cache>/acceptance``) keyed by a hash of the package source and
the resolved run config, so a rerun with unchanged code reloads them. Every
reported AUC is recomputed from the reloaded model on the test split.
"""

import functools
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import ignnet
from conftest import ACCEPTANCE, toy_graph, toy_nodes
from ignnet.autodiff import grad_check, sigmoid
from ignnet.config import architecture_from, load_config, training_from
from ignnet.data.openml import default_cache_dir
from ignnet.errors import FetchError
from ignnet.graph import build_adjacency, calibrate_self_loop, mass_for, normalize_adjacency
from ignnet.metrics import auc_binary, evaluation_auc, spearman_rho
from ignnet.model import ArchitectureConfig, IgnnetModel, forward, init_params, load_model, save_model
from ignnet.pipeline import fit, load_dataset, make_graph, prepare
from ignnet.shap import convergence_audit, exact_shapley, kernel_shap
from ignnet.training import loss_on_tape
from test_model import _perturb, make_model

DATASETS = ("abalone", "waveform5000", "phonemes")
AUC_TARGETS = {"abalone": (0.881, 0.03), "waveform5000": (0.965, 0.03), "phonemes": (0.922, 0.04)}
SEEDS = (0, 1, 2)
AUDIT_SCHEDULE = (32, 128, 512, 2048, 8192)
RUN_LIMIT_S = 15 * 60


# -- shared runs ------------------------------------------------------------------

def _source_hash() -> str:
    digest = hashlib.sha256()
    root = Path(ignnet.__file__).parent
    for path in sorted(root.rglob("*.py")):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


def _store() -> Path:
    path = Path(os.environ.get("IGNNET_ACCEPTANCE_DIR") or default_cache_dir() / "acceptance")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(preset, seed=0, **changes):
    config = load_config(preset=preset)
    config["training"]["seed"] = seed
    for section, values in changes.items():
        config[section].update(values)
    return config


@functools.lru_cache(maxsize=None)
def _dataset(preset):
    return load_dataset(load_config(preset=preset))


@functools.lru_cache(maxsize=None)
def _prepared(preset, seed):
    config = load_config(preset=preset)
    return prepare(_dataset(preset), config["split"], config["oversample"], seed=seed)


def trained(config):
    """Model for a resolved config, trained once per source revision."""
    key = hashlib.sha256((_source_hash() + json.dumps(config, sort_keys=True)).encode()).hexdigest()[:20]
    path = _store() / f"{config['name']}-s{config['training']['seed']}-{key}.json"
    if path.exists():
        return load_model(path)
    data = _prepared(config["name"], config["training"]["seed"])
    started = time.perf_counter()
    result = fit(data, make_graph(data, config["graph"]), architecture_from(config, data.dataset.n_classes),
                 training_from(config), {"config": config})
    result.model.metadata["fit_seconds"] = time.perf_counter() - started
    save_model(result.model, path)
    return load_model(path)


def _test_auc(model, preset, seed=0):
    data = _prepared(preset, seed)
    return float(evaluation_auc(model.predict_proba(data.x["test"]), data.y["test"]))


def _available(preset):
    try:
        _dataset(preset)
        return None
    except FetchError as exc:
        return str(exc)


# -- criteria ---------------------------------------------------------------------

def criterion_1():
    """Bit-exact reconstruction of every test prediction from its scores."""
    results = []
    for preset in DATASETS:
        missing = _available(preset)
        if missing:
            results.append((f"1-{preset}", False, f"dataset unavailable: {missing}"))
            continue
        model = trained(_config(preset))
        x = _prepared(preset, 0).x["test"]
        mismatches = 0
        for start in range(0, len(x), 512):
            out = model.forward(x[start:start + 512])
            mismatches += sum(sigmoid(math.fsum(out.tau[r]) + out.bias) != out.prediction[r]
                              for r in range(len(out.prediction)))
        results.append((f"1-{preset}", mismatches == 0, f"{mismatches} mismatches over {len(x)} test rows"))
    return results


def criterion_2():
    """End-to-end finite differences through forward and loss."""
    worst, fine = [], []
    for seed in (0, 1, 2):
        x, y = toy_nodes(rows=24, nodes=6, seed=seed)
        graph = toy_graph(x)
        config = ArchitectureConfig()
        params = _perturb(IgnnetModel(config, init_params(config, 6, seed), graph), seed).params

        def fn(tape, handles):
            out = forward(params, config, graph.normalized, x, training=False, tape=tape)
            return loss_on_tape(tape, out.output, y)

        worst.append(grad_check(fn, dict(params.weights), eps=1e-5, max_coords=12, seed=seed))
        # a smaller step tells a relu kink inside the stencil apart from a wrong gradient
        fine.append(grad_check(fn, dict(params.weights), eps=1e-7, max_coords=12, seed=seed))
    return [("2", max(worst) <= 1e-3, "max relative error per seed " + ", ".join(f"{w:.2e}" for w in worst)
             + " (eps 1e-7: " + ", ".join(f"{w:.2e}" for w in fine) + ")")]


def _scorer(m, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=m), rng.normal(size=(m, m)) / m, rng.normal(size=m)
    return lambda rows: rows @ a + np.einsum("ri,ij,rj->r", rows, b, rows) + np.tanh(rows @ c) * rows[:, 0]


def criterion_3():
    """Fully enumerated KernelSHAP against brute-force Shapley values."""
    gaps = {}
    for m in (3, 8, 12):
        f = _scorer(m, m)
        rng = np.random.default_rng(100 + m)
        x, bg = rng.random(m), rng.random(m)
        result = kernel_shap(f, x, bg, n_samples=2**m - 2)
        assert result.enumerated
        gaps[m] = float(np.abs(result.values - exact_shapley(f, x, bg)).max())
    detail = ", ".join(f"M={m}: {g:.1e}" for m, g in gaps.items())
    return [("3", max(gaps.values()) <= 1e-6, detail)]


def audit(preset, schedule=AUDIT_SCHEDULE, instances=50):
    model = trained(_config(preset))
    data = _prepared(preset, 0)
    report = convergence_audit(model, data.x["test"][:instances], data.train_mean, schedule, seed=0)
    cos, rho = report.mean_cosine, report.mean_spearman
    # a checkpoint counts when mean Spearman has not dropped since the previous one
    rising = 1 + int(sum(b >= a for a, b in zip(rho, rho[1:])))
    passed = bool(cos[-1] > cos[0] and cos[-1] >= 0.9 and rising >= 4)
    detail = (f"schedule {'/'.join(map(str, schedule))}, {instances} instances; cosine {cos[0]:.3f} -> {cos[-1]:.3f}; spearman " + " ".join(f"{r:.3f}" for r in rho)
              + f" ({rising}/5 checkpoints rising)")
    return passed, detail


def criterion_4():
    """KernelSHAP convergence toward the model's own scores on Abalone."""
    missing = _available("abalone")
    if missing:
        results = [("4", False, f"Abalone unavailable: {missing}")]
        # with 40 features, paired budgets below 128 leave the system singular
        passed, detail = audit("waveform5000", (128, 256, 512, 2048, 8192))
        results.append(("4-waveform5000 (supplementary)", passed, detail))
        return results
    return [("4", *audit("abalone"))]


def criterion_5():
    """Median test AUC over three seeds with the preset hyperparameters."""
    results = []
    for preset in DATASETS:
        missing = _available(preset)
        if missing:
            results.append((f"5-{preset}", False, f"dataset unavailable: {missing}"))
            continue
        aucs, seconds = [], []
        for seed in SEEDS:
            model = trained(_config(preset, seed))
            aucs.append(_test_auc(model, preset, seed))
            seconds.append(model.metadata["fit_seconds"])
        target, tol = AUC_TARGETS[preset]
        median = float(np.median(aucs))
        passed = abs(median - target) <= tol and max(seconds) < RUN_LIMIT_S
        detail = (f"median {median:.4f} (target {target} +/- {tol}); seeds "
                  + ", ".join(f"{a:.4f}" for a in aucs) + f"; slowest run {max(seconds):.0f}s")
        results.append((f"5-{preset}", passed, detail))
    return results


def ablation(preset):
    base = _config(preset)
    calibrated = calibrate_self_loop(_prepared(preset, 0).correlation)
    dev = {
        "6 layers": trained(base).metadata["dev_auc"],
        "1 layer": trained(_config(preset, architecture={"layers": 1})).metadata["dev_auc"],
        "calibrated": trained(_config(preset, graph={"self_loop": calibrated})).metadata["dev_auc"],
        "delta 0": trained(_config(preset, graph={"self_loop": 0, "allow_isolated": True})).metadata["dev_auc"],
    }
    passed = dev["6 layers"] >= dev["1 layer"] and dev["delta 0"] <= dev["calibrated"] + 0.01
    detail = "; ".join(f"{k} {v:.4f}" for k, v in dev.items()) + f" (calibrated delta {calibrated:g})"
    return passed, detail


def criterion_6():
    """Layer-count and self-loop ablation directions on Abalone."""
    missing = _available("abalone")
    if missing:
        return [("6", False, f"Abalone unavailable: {missing}"),
                ("6-phonemes (supplementary)", *ablation("phonemes"))]
    return [("6", *ablation("abalone"))]


def _pair_auc(scores, labels):
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def criterion_7():
    """Rank AUC against pair counting; Spearman against the d^2 formula."""
    rng = np.random.default_rng(7)
    auc_bad = 0
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = (0, 1)
        scores = rng.integers(0, 6, size=n) / 5.0  # few levels, many ties
        auc_bad += auc_binary(scores, labels) != _pair_auc(scores, labels)
    rho_gap = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 60))
        a, b = rng.permutation(n), rng.permutation(n)
        closed = 1 - 6 * np.sum((a - b) ** 2) / (n * (n * n - 1))
        rho_gap = max(rho_gap, abs(spearman_rho(a, b) - closed))
    return [("7", auc_bad == 0 and rho_gap <= 1e-12,
             f"{auc_bad}/1000 AUC mismatches; max Spearman gap {rho_gap:.1e}")]


def criterion_8():
    """Normalization, fallback activation and calibrated self-loop mass."""
    rng = np.random.default_rng(8)
    norm_gap = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 30))
        a = rng.uniform(-0.5, 1.0, size=(n, n)) * (rng.random((n, n)) < 0.5)
        a = np.triu(a, 1)
        a = a + a.T + np.diag(rng.uniform(0.5, 5.0, size=n))
        a[np.diag_indices(n)] += np.maximum(0.0, -a.sum(axis=1)) + 0.1  # keep every degree positive
        d = np.diag(1 / np.sqrt(a.sum(axis=1)))
        norm_gap = max(norm_gap, float(np.abs(normalize_adjacency(a) - d @ a @ d).max()))
    fallback_bad = 0
    for _ in range(300):
        n = int(rng.integers(2, 12))
        corr = np.clip(rng.normal(scale=rng.uniform(0.02, 0.3), size=(n, n)), -1, 1)
        corr = np.triu(corr, 1)
        corr = corr + corr.T + np.eye(n)
        expected = not (np.abs(corr[~np.eye(n, dtype=bool)]) >= 0.2).any()
        fallback_bad += build_adjacency(corr, 1.0)[2] != expected
    results = [("8-graph", norm_gap <= 1e-12 and fallback_bad == 0,
                f"normalization max gap {norm_gap:.1e}; {fallback_bad}/300 fallback mismatches")]
    for preset in DATASETS:
        missing = _available(preset)
        if missing:
            results.append((f"8-{preset}", False, f"dataset unavailable: {missing}"))
            continue
        corr = _prepared(preset, 0).correlation
        delta = calibrate_self_loop(corr)
        mass = mass_for(corr, delta)
        results.append((f"8-{preset}", 0.70 <= mass <= 0.90, f"calibrated delta {delta:g}, mass {mass:.3f}"))
    return results


def criterion_9(tmp=None):
    """Save/load keeps predictions bit-identical for both heads."""
    import tempfile

    results = []
    x = np.random.default_rng(9).random((100, 5))
    with tempfile.TemporaryDirectory(dir=tmp) as folder:
        for head in ("interpretable", "opaque"):
            model = _perturb(make_model(ArchitectureConfig(head=head)))
            path = save_model(model, Path(folder) / f"{head}.json")
            same = model.predict_proba(x).tobytes() == load_model(path).predict_proba(x).tobytes()
            results.append((f"9-{head}", same, "bit-identical on 100 inputs" if same else "predictions differ"))
    return results


CRITERIA = {str(i): globals()[f"criterion_{i}"] for i in range(1, 10)}


def _check(name):
    started = time.perf_counter()
    results = CRITERIA[name]()
    elapsed = time.perf_counter() - started
    for key, passed, detail in results:
        ACCEPTANCE[key] = (passed, f"{detail} [{elapsed:.0f}s]")
    failed = [f"{key}: {detail}" for key, passed, detail in results if not passed]
    assert not failed, "; ".join(failed)


def test_criterion_1_exact_additivity():
    _check("1")


def test_criterion_2_gradients():
    _check("2")


def test_criterion_3_shapley_oracle():
    _check("3")


@pytest.mark.slow
def test_criterion_4_convergence_audit():
    _check("4")


@pytest.mark.slow
def test_criterion_5_auc_reproduction():
    _check("5")


@pytest.mark.slow
def test_criterion_6_ablation_directions():
    _check("6")


def test_criterion_7_metric_oracles():
    _check("7")


def test_criterion_8_graph_properties():
    _check("8")


def test_criterion_9_roundtrip():
    _check("9")


if __name__ == "__main__":
    wanted = sys.argv[1:] or list(CRITERIA)
    for name in wanted:
        started = time.perf_counter()
        for key, passed, detail in CRITERIA[name]():
            print(f"criterion {key}: {'PASS' if passed else 'FAIL'} - {detail} "
                  f"[{time.perf_counter() - started:.0f}s]", flush=True)
