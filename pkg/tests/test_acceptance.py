"""End-to-end acceptance checks.

Each test exercises one headline behavior of the package, from the
closed-form alignment residual up to the trained-network experiments,
with explicit tolerances and wall-clock budgets. Every test records a
one-line verdict that the session prints in its own summary section.
"""

import dataclasses
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from koopcredit.alignment import make_alignment
from koopcredit.cli import AnalysisConfig, DatasetConfig, run_analysis
from koopcredit.credit import (
    block_sensitivity,
    block_sensitivity_log10,
    feature_weights,
)
from koopcredit.koopman import fit_block
from koopcredit.linalg import kron, pinv, vec
from koopcredit.model import (
    DenseLayer,
    batch_boundary_states,
    build_model,
    load_mnist_idx,
    partition,
    pool_input_9x9,
)


def test_alignment_residual_closed_form(criterion):
    criterion.start("1 alignment residual matches closed form")
    t0 = time.perf_counter()
    worst = 0.0
    for n, m in [(3, 2), (5, 2), (2, 3), (7, 7), (16, 4)]:
        expected = np.sqrt(max(n - m, 0))
        for seed in range(100):
            pair = make_alignment(n, m, seed)
            residual = np.linalg.norm(pair.b @ pair.a - np.eye(n))
            worst = max(worst, abs(residual - expected))
    elapsed = time.perf_counter() - t0
    criterion.note(f"worst deviation {worst:.2e}")
    criterion.note(f"{elapsed:.1f}s")
    assert worst <= 1e-6
    assert elapsed < 5.0


def test_pseudoinverse_penrose_conditions(criterion):
    criterion.start("2 pseudoinverse satisfies all four Penrose conditions")
    t0 = time.perf_counter()
    rng = np.random.default_rng(20260819)
    worst = 0.0
    for case in range(200):
        rows = int(rng.integers(1, 13))
        cols = int(rng.integers(1, 13))
        if case % 3 == 0:
            r = max(1, min(rows, cols) // 2)
            m = rng.normal(size=(rows, r)) @ rng.normal(size=(r, cols))
        else:
            m = rng.normal(size=(rows, cols))
        a = pinv(m)
        worst = max(
            worst,
            np.linalg.norm(m @ a @ m - m),
            np.linalg.norm(a @ m @ a - a),
            np.linalg.norm((m @ a).T - m @ a),
            np.linalg.norm((a @ m).T - a @ m),
        )
    elapsed = time.perf_counter() - t0
    criterion.note(f"worst condition residual {worst:.2e}")
    criterion.note(f"{elapsed:.1f}s")
    assert worst <= 1e-8
    assert elapsed < 5.0


def test_vectorization_identity(criterion):
    criterion.start("3 Kronecker form reproduces vec(AXB)")
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        p = int(rng.integers(1, 7))
        q = int(rng.integers(1, 7))
        r = int(rng.integers(1, 7))
        s = int(rng.integers(1, 7))
        a = rng.normal(size=(p, q))
        x = rng.normal(size=(q, r))
        b = rng.normal(size=(r, s))
        lhs = kron(a, b.T) @ vec(x)
        rhs = vec(a @ x @ b)
        denom = max(np.linalg.norm(rhs), np.finfo(float).tiny)
        worst = max(worst, np.linalg.norm(lhs - rhs) / denom)
    elapsed = time.perf_counter() - t0
    criterion.note(f"worst relative error {worst:.2e}")
    criterion.note(f"{elapsed:.1f}s")
    assert worst <= 1e-10
    assert elapsed < 2.0


def _chain_jacobian(ops, i):
    """Jacobian of vec(composed product) in the entries of ops[i]."""
    n = ops[0].shape[0]
    left = np.eye(n)
    for m in ops[i + 1 :]:
        left = m @ left
    right = np.eye(n)
    for m in ops[:i]:
        right = m @ right
    return kron(left, right.T)


def test_chain_jacobian_determinant(criterion):
    criterion.start("4 chain Jacobian determinant, assembled and differenced")
    t0 = time.perf_counter()
    rng = np.random.default_rng(404)
    worst_assembled = 0.0
    worst_fd = 0.0
    h = 1e-6
    for _ in range(20):
        ops = []
        while len(ops) < 3:
            m = rng.normal(size=(2, 2))
            if abs(np.linalg.det(m)) >= 0.3:
                ops.append(m)
        dets = [abs(np.linalg.det(m)) for m in ops]
        for i in range(3):
            expected = np.prod([d for s, d in enumerate(dets) if s != i]) ** 2

            assembled = abs(np.linalg.det(_chain_jacobian(ops, i)))
            worst_assembled = max(
                worst_assembled, abs(assembled - expected) / expected
            )

            def composed(flat, i=i):
                mats = list(ops)
                mats[i] = flat.reshape(2, 2)
                return vec(mats[2] @ mats[1] @ mats[0])

            base = vec(ops[i])
            cols = []
            for j in range(4):
                step = np.zeros(4)
                step[j] = h
                cols.append((composed(base + step) - composed(base - step)) / (2 * h))
            fd = abs(np.linalg.det(np.column_stack(cols)))
            worst_fd = max(worst_fd, abs(fd - expected) / expected)

            reported = block_sensitivity(ops, i)
            assert reported == pytest.approx(expected, rel=1e-6)
    elapsed = time.perf_counter() - t0
    criterion.note(f"assembled rel err {worst_assembled:.2e}")
    criterion.note(f"finite-difference rel err {worst_fd:.2e}")
    criterion.note(f"{elapsed:.1f}s")
    assert worst_assembled <= 1e-6
    assert worst_fd <= 1e-3
    assert elapsed < 10.0


def test_sensitivity_position_invariance(criterion):
    criterion.start("5 sensitivity unchanged by reordering the other blocks")
    rng = np.random.default_rng(55)
    for _ in range(50):
        count = int(rng.integers(3, 7))
        n = int(rng.integers(1, 5))
        logs = list(rng.normal(scale=3.0, size=count))
        shapes = [(n, n)] * count
        base = block_sensitivity_log10(logs, shapes)
        i = int(rng.integers(count))
        others = [s for s in range(count) if s != i]
        rng.shuffle(others)
        new_pos = int(rng.integers(count))
        order = others[:new_pos] + [i] + others[new_pos:]
        moved = block_sensitivity_log10([logs[s] for s in order], shapes)
        assert moved[new_pos] == base[i]
    criterion.note("exact log-space equality, 50 trials")


def _linear_net(widths, seed):
    """Bias-free dense chain with the given boundary widths."""
    rng = np.random.default_rng(seed)
    layers = []
    for w_in, w_out in zip(widths, widths[1:]):
        layers.append(
            DenseLayer(
                weight=rng.normal(size=(w_out, w_in)), bias=np.zeros(w_out)
            )
        )
    net = build_model("linear", (widths[0],), layers)
    ranges = [(i, i) for i in range(len(layers))]
    return net, partition(net, ranges).blocks


def test_linear_network_recovery(criterion):
    criterion.start("6 pipeline recovers linear-network weights exactly")
    t0 = time.perf_counter()
    worst_block = 0.0
    worst_product = 0.0
    for widths, seed in [((2, 3, 4), 1), ((6, 5, 3), 2), ((5, 5, 5), 3)]:
        net, blocks = _linear_net(widths, seed)
        rng = np.random.default_rng(seed + 100)
        xs = rng.normal(size=(16, widths[0]))
        traces = batch_boundary_states(net, xs)
        mats = []
        for blk in blocks:
            pair = make_alignment(blk.out_dim, blk.in_dim, seed=blk.id + 9)
            op = fit_block(net, blk, pair, traces[blk.layer_range[0]])
            w = net.layers[blk.layer_range[0]].weight
            err = np.linalg.norm(op.matrix - w) / np.linalg.norm(w)
            worst_block = max(worst_block, err)
            mats.append(op.matrix)
        product = feature_weights(mats)
        exact = net.layers[1].weight @ net.layers[0].weight
        worst_product = max(
            worst_product,
            np.linalg.norm(product - exact) / np.linalg.norm(exact),
        )
    elapsed = time.perf_counter() - t0
    criterion.note(f"worst block error {worst_block:.2e}")
    criterion.note(f"worst composed error {worst_product:.2e}")
    criterion.note(f"{elapsed:.1f}s")
    assert worst_block <= 1e-6
    assert worst_product <= 1e-6
    assert elapsed < 10.0


def _mnist_dataset(images_path, labels_path, pool=False):
    return DatasetConfig(
        kind="mnist_idx",
        images=images_path,
        labels=labels_path,
        images_path=images_path,
        labels_path=labels_path,
        pool_9x9=pool,
    )


def test_lenet_layer_credit_ordering(criterion, digit_corpus, lenet_model):
    criterion.start("7 trained Lenet: conv credit above dense, pools last")
    model_path, accuracy = lenet_model
    assert accuracy >= 0.97
    dataset = _mnist_dataset(
        digit_corpus["test_images"], digit_corpus["test_labels"]
    )
    base = AnalysisConfig(
        model="lenet",
        model_path=model_path,
        dataset=dataset,
        partition_ranges=tuple((i, i) for i in range(12)),
        seed=0,
        samples=64,
        repeats=10,
        d_cap=4,
    )
    t0 = time.perf_counter()
    passing = 0
    seed_notes = []
    for master_seed in range(10):
        report = run_analysis(dataclasses.replace(base, seed=master_seed))
        by_kind = {"conv2d": [], "dense": [], "maxpool2d": []}
        for entry in report.blocks:
            kind = entry.name.split("+")[0]
            if kind in by_kind:
                by_kind[kind].append(entry.log10_credit)
        conv_above_dense = min(by_kind["conv2d"]) > max(by_kind["dense"])
        pools_last = max(by_kind["maxpool2d"]) < min(
            by_kind["conv2d"] + by_kind["dense"]
        )
        if conv_above_dense and pools_last:
            passing += 1
        seed_notes.append(
            f"seed {master_seed}: min conv {min(by_kind['conv2d']):.1f}, "
            f"max dense {max(by_kind['dense']):.1f}, "
            f"max pool {max(by_kind['maxpool2d']):.1f}"
        )
    elapsed = time.perf_counter() - t0
    criterion.note(f"ordering held in {passing}/10 master seeds")
    criterion.note(f"model accuracy {accuracy:.4f}")
    criterion.note(f"{elapsed:.0f}s")
    assert elapsed < 900.0
    assert passing >= 8, (
        "conv>dense with pools last held in "
        f"{passing}/10 master seeds; per-seed log10 credits: "
        + "; ".join(seed_notes)
    )


def test_dense_net_weights_sit_on_digit_strokes(
    criterion, digit_corpus, dense_model
):
    criterion.start("8 dense net: class weights concentrate on digit pixels")
    model_path, accuracy = dense_model
    assert accuracy >= 0.95
    dataset = _mnist_dataset(
        digit_corpus["test_images"], digit_corpus["test_labels"], pool=True
    )
    config = AnalysisConfig(
        model="dense",
        model_path=model_path,
        dataset=dataset,
        partition_ranges=tuple((i, i) for i in range(7)),
        seed=2024,
        samples=256,
        repeats=10,
    )
    t0 = time.perf_counter()
    report = run_analysis(config)
    weights = np.abs(report.feature_weights)
    images, labels = load_mnist_idx(
        digit_corpus["test_images"], digit_corpus["test_labels"]
    )
    mass_fractions = []
    area_fractions = []
    for row, label in zip(images, labels):
        pooled = pool_input_9x9(row)
        mask = pooled > 0
        w = weights[label]
        mass_fractions.append(w[mask].sum() / w.sum())
        area_fractions.append(mask.mean())
    mean_mass = float(np.mean(mass_fractions))
    mean_area = float(np.mean(area_fractions))
    elapsed = time.perf_counter() - t0
    criterion.note(
        f"weight mass on digit pixels {mean_mass:.3f} vs area {mean_area:.3f}"
        f" ({mean_mass / mean_area:.2f}x)"
    )
    criterion.note(f"model accuracy {accuracy:.4f}")
    criterion.note(f"{elapsed:.0f}s")
    assert mean_mass >= 1.5 * mean_area
    assert elapsed < 300.0


def test_analyze_runs_are_byte_identical(
    criterion, digit_corpus, dense_model, tmp_path
):
    criterion.start("9 analyze twice, byte-identical report.json")
    model_path, _ = dense_model
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "model": model_path,
                "dataset": {
                    "kind": "mnist_idx",
                    "images": digit_corpus["test_images"],
                    "labels": digit_corpus["test_labels"],
                    "pool_9x9": True,
                },
                "partition": [[i, i] for i in range(7)],
                "seed": 424242,
                "samples": 64,
                "repeats": 10,
            }
        )
    )
    t0 = time.perf_counter()
    outputs = []
    for name in ("first", "second"):
        out_dir = tmp_path / name
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "koopcredit",
                "analyze",
                "--config",
                str(config_path),
                "--out",
                str(out_dir),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outputs.append((out_dir / "report.json").read_bytes())
    elapsed = time.perf_counter() - t0
    identical = outputs[0] == outputs[1]
    criterion.note(f"reports identical: {identical}")
    criterion.note(f"{elapsed:.0f}s")
    assert identical
    assert elapsed < 60.0
