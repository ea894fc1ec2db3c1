"""Analysis driver and command line interface.

The `credit` command reads a JSON config describing a model, a dataset,
a block partition and the fitting parameters, runs the repeat loop
(fresh random alignments each repeat, operators averaged entrywise),
and exports a report directory. The same machinery is importable:
:func:`load_config` + :func:`run_analysis` + :func:`export_report`.

Config file layout (paths are resolved relative to the config file)::

    {
      "model": "model.json",
      "dataset": {"kind": "mnist_idx", "images": "img.idx",
                  "labels": "lab.idx", "pool_9x9": false, "limit": null},
      "partition": [[0, 1], [2, 2]],
      "samples": 64,
      "repeats": 10,
      "seed": 1234,
      "d_cap": 256,
      "sv_tolerance": null
    }

The synthetic dataset variant is
``{"kind": "synthetic_gaussian", "mean": 0.0, "std": 1.0}``; it draws
``samples`` network inputs of the model's input width.

Exit codes: 0 success, 2 configuration or model-format problems,
3 numerical failures, 4 I/O and data-format problems.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .alignment import make_alignment
from .credit import (
    BlockCreditEntry,
    ConvChannelMeta,
    CreditReport,
    KernelCreditEntry,
    block_credit,
    block_sensitivity_log10,
    feature_weights,
    kernel_credit,
    normalize_credits,
)
from .errors import (
    AnalysisError,
    ConfigError,
    DataFormatError,
    KoopcreditError,
    ModelFormatError,
    NumericalError,
    ShapeError,
)
from .koopman import embed_dim, fit_block
from .model import (
    NetworkModel,
    batch_boundary_states,
    forward,
    load_mnist_idx,
    load_model,
    partition,
    pool_input_9x9,
)

__all__ = [
    "DatasetConfig",
    "AnalysisConfig",
    "load_config",
    "run_analysis",
    "report_to_dict",
    "report_from_dict",
    "load_report",
    "export_report",
    "main",
]

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "koopcredit-report-v1"

# Stream separators mixed into SeedSequence entropy so the sample
# selection, synthetic data and per-repeat alignment draws are
# independent even under equal master seeds.
SAMPLE_SEED_TAG = 0x5A3D1E
DATA_SEED_TAG = 0xDA7A5E
ALIGN_SEED_TAG = 0xA119B1


def _package_version() -> str:
    try:
        from importlib.metadata import PackageNotFoundError, version

        return version("koopcredit")
    except PackageNotFoundError:
        return "0.0.0"


@dataclass(frozen=True)
class DatasetConfig:
    """Input source for an analysis.

    ``images``/``labels`` keep the strings as written in the config (for
    reproducible report metadata); ``images_path``/``labels_path`` are
    those strings resolved against the config file's directory.
    """

    kind: str
    images: str | None = None
    labels: str | None = None
    images_path: str | None = None
    labels_path: str | None = None
    pool_9x9: bool = False
    limit: int | None = None
    mean: float = 0.0
    std: float = 1.0


@dataclass(frozen=True)
class AnalysisConfig:
    """A fully validated analysis request.

    ``samples`` defaults to 64 and ``repeats`` to 10 when the config file
    omits them; ``output_dir`` (optional, resolved against the config
    directory) names where `credit analyze` writes artifacts unless
    overridden on the command line.
    """

    model: str
    model_path: str
    dataset: DatasetConfig
    partition_ranges: tuple[tuple[int, int], ...]
    seed: int
    samples: int = 64
    repeats: int = 10
    d_cap: int = 256
    sv_tolerance: float | None = None
    output_dir: str | None = None


def _cfg_require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _cfg_int(obj: dict, key: str, minimum: int) -> int:
    value = obj[key]
    _cfg_require(
        isinstance(value, int) and not isinstance(value, bool),
        f"config field '{key}' must be an integer",
    )
    _cfg_require(value >= minimum, f"config field '{key}' must be >= {minimum}")
    return value


def _parse_dataset(obj, base_dir: str) -> DatasetConfig:
    _cfg_require(isinstance(obj, dict), "config field 'dataset' must be an object")
    kind = obj.get("kind")
    if kind == "mnist_idx":
        allowed = {"kind", "images", "labels", "pool_9x9", "limit"}
        for key in obj:
            _cfg_require(key in allowed, f"unknown dataset field '{key}'")
        for key in ("images", "labels"):
            _cfg_require(
                isinstance(obj.get(key), str),
                f"dataset field '{key}' must be a path string",
            )
        pool = obj.get("pool_9x9", False)
        _cfg_require(
            isinstance(pool, bool), "dataset field 'pool_9x9' must be a boolean"
        )
        limit = obj.get("limit")
        if limit is not None:
            _cfg_require(
                isinstance(limit, int)
                and not isinstance(limit, bool)
                and limit >= 1,
                "dataset field 'limit' must be a positive integer or null",
            )
        return DatasetConfig(
            kind=kind,
            images=obj["images"],
            labels=obj["labels"],
            images_path=os.path.join(base_dir, obj["images"]),
            labels_path=os.path.join(base_dir, obj["labels"]),
            pool_9x9=pool,
            limit=limit,
        )
    if kind == "synthetic_gaussian":
        allowed = {"kind", "mean", "std"}
        for key in obj:
            _cfg_require(key in allowed, f"unknown dataset field '{key}'")
        mean = obj.get("mean", 0.0)
        std = obj.get("std", 1.0)
        _cfg_require(
            isinstance(mean, (int, float)) and not isinstance(mean, bool),
            "dataset field 'mean' must be a number",
        )
        _cfg_require(
            isinstance(std, (int, float))
            and not isinstance(std, bool)
            and std > 0,
            "dataset field 'std' must be a positive number",
        )
        return DatasetConfig(kind=kind, mean=float(mean), std=float(std))
    raise ConfigError(
        "dataset field 'kind' must be 'mnist_idx' or 'synthetic_gaussian', "
        f"got {kind!r}"
    )


def load_config(path) -> AnalysisConfig:
    """Read and validate an analysis config file.

    Raises ConfigError for structural problems (unknown fields included,
    so typos fail loudly) and lets OSError from an unreadable file
    propagate.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    _cfg_require(isinstance(obj, dict), f"{path}: config must be a JSON object")
    allowed = {
        "model",
        "dataset",
        "partition",
        "samples",
        "repeats",
        "seed",
        "d_cap",
        "sv_tolerance",
        "output_dir",
    }
    for key in obj:
        _cfg_require(key in allowed, f"unknown config field '{key}'")
    for key in ("model", "dataset", "partition", "seed"):
        _cfg_require(key in obj, f"config is missing required field '{key}'")
    _cfg_require(
        isinstance(obj["model"], str), "config field 'model' must be a path string"
    )
    base_dir = os.path.dirname(os.path.abspath(path))
    dataset = _parse_dataset(obj["dataset"], base_dir)
    ranges = obj["partition"]
    _cfg_require(
        isinstance(ranges, list) and len(ranges) >= 1,
        "config field 'partition' must be a non-empty list",
    )
    parsed_ranges = []
    for i, rng in enumerate(ranges):
        _cfg_require(
            isinstance(rng, list)
            and len(rng) == 2
            and all(isinstance(v, int) and not isinstance(v, bool) for v in rng),
            f"partition entry {i} must be a [first, last] pair of integers",
        )
        parsed_ranges.append((rng[0], rng[1]))
    samples = _cfg_int(obj, "samples", 1) if "samples" in obj else 64
    repeats = _cfg_int(obj, "repeats", 1) if "repeats" in obj else 10
    seed = _cfg_int(obj, "seed", 0)
    d_cap = _cfg_int(obj, "d_cap", 1) if "d_cap" in obj else 256
    tol = obj.get("sv_tolerance")
    if tol is not None:
        _cfg_require(
            isinstance(tol, (int, float))
            and not isinstance(tol, bool)
            and tol > 0,
            "config field 'sv_tolerance' must be a positive number or null",
        )
        tol = float(tol)
    out_dir = obj.get("output_dir")
    if out_dir is not None:
        _cfg_require(
            isinstance(out_dir, str),
            "config field 'output_dir' must be a path string",
        )
        out_dir = os.path.join(base_dir, out_dir)
    return AnalysisConfig(
        model=obj["model"],
        model_path=os.path.join(base_dir, obj["model"]),
        dataset=dataset,
        partition_ranges=tuple(parsed_ranges),
        seed=seed,
        samples=samples,
        repeats=repeats,
        d_cap=d_cap,
        sv_tolerance=tol,
        output_dir=out_dir,
    )


def _seed_word(*parts: int) -> int:
    """One deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _load_samples(config: AnalysisConfig, net: NetworkModel) -> np.ndarray:
    """The (samples, input_dim) batch the whole analysis runs on."""
    input_dim = net.boundary_dims[0]
    ds = config.dataset
    if ds.kind == "synthetic_gaussian":
        rng = np.random.default_rng(
            np.random.SeedSequence([config.seed, DATA_SEED_TAG])
        )
        return rng.normal(ds.mean, ds.std, size=(config.samples, input_dim))
    images, _ = load_mnist_idx(ds.images_path, ds.labels_path, ds.limit)
    if ds.pool_9x9:
        if images.shape[1] != 28 * 28:
            raise DataFormatError(
                "pool_9x9 preprocessing needs 784-pixel images, "
                f"{ds.images_path} holds {images.shape[1]}-pixel images"
            )
        images = np.stack([pool_input_9x9(row) for row in images])
    if images.shape[1] != input_dim:
        raise ConfigError(
            f"model expects {input_dim}-dimensional inputs but the dataset "
            f"provides {images.shape[1]}-dimensional ones"
        )
    if images.shape[0] < config.samples:
        raise AnalysisError(
            f"dataset provides {images.shape[0]} samples but the analysis "
            f"needs {config.samples}"
        )
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, SAMPLE_SEED_TAG])
    )
    idx = np.sort(
        rng.choice(images.shape[0], size=config.samples, replace=False)
    )
    return images[idx]


def _block_name(net: NetworkModel, block) -> str:
    first, last = block.layer_range
    return "+".join(net.layers[i].kind for i in range(first, last + 1))


def run_analysis(config: AnalysisConfig) -> CreditReport:
    """Execute the full pipeline described by ``config``.

    For each repeat and block, a fresh alignment pair is drawn from a
    seed derived from (master seed, repeat, block); the decomposed
    operators are averaged entrywise over repeats and the credit math
    runs on the averages. Errors during fitting are re-raised with
    "repeat r, block i" context, keeping their type (and therefore the
    process exit code).
    """
    net = load_model(config.model_path)
    blocks = partition(net, config.partition_ranges).blocks
    xs = _load_samples(config, net)
    traces = batch_boundary_states(net, xs)
    block_inputs = [traces[blk.layer_range[0]] for blk in blocks]
    del traces
    n_blocks = len(blocks)
    sums: list[np.ndarray | None] = [None] * n_blocks
    fit_residuals: list[list[float]] = [[] for _ in range(n_blocks)]
    alignment_seeds: list[list[int]] = [[] for _ in range(n_blocks)]
    for r in range(config.repeats):
        for blk in blocks:
            word = _seed_word(config.seed, ALIGN_SEED_TAG, r, blk.id)
            try:
                pair = make_alignment(blk.out_dim, blk.in_dim, word)
                op = fit_block(
                    net,
                    blk,
                    pair,
                    block_inputs[blk.id],
                    d_cap=config.d_cap,
                    tol=config.sv_tolerance,
                    keep_aligned=False,
                )
            except KoopcreditError as exc:
                raise type(exc)(
                    f"repeat {r}, block {blk.id}: {exc}"
                ) from exc
            if sums[blk.id] is None:
                sums[blk.id] = op.matrix
            else:
                sums[blk.id] += op.matrix
            fit_residuals[blk.id].append(op.fit_residual)
            alignment_seeds[blk.id].append(word)
            logger.info(
                "repeat %d block %d (%s, %s): fit residual %.3e",
                r,
                blk.id,
                _block_name(net, blk),
                blk.category,
                op.fit_residual,
            )
    means = [sums[i] / config.repeats for i in range(n_blocks)]
    values = []
    logs = []
    flags = []
    for m in means:
        value, log10_value, degenerate = block_credit(m, config.sv_tolerance)
        values.append(value)
        logs.append(log10_value)
        flags.append(degenerate)
    shares, ranks, uniform = normalize_credits(logs, flags)
    if uniform:
        logger.warning(
            "every block credit is degenerate with an empty product; "
            "shares fall back to uniform"
        )
    sens_logs = block_sensitivity_log10(logs, [m.shape for m in means])
    if sens_logs is None:
        sens = None
        logger.info(
            "block operators have mixed shapes; chain sensitivity is "
            "not applicable"
        )
    else:
        with np.errstate(over="ignore", under="ignore"):
            sens = [float(np.power(10.0, v)) for v in sens_logs]
    entries = tuple(
        BlockCreditEntry(
            block_id=blk.id,
            name=_block_name(net, blk),
            gen_absdet=values[blk.id],
            log10_credit=logs[blk.id],
            degenerate=flags[blk.id],
            credit_share=float(shares[blk.id]),
            rank=ranks[blk.id],
            sensitivity=None if sens is None else sens[blk.id],
        )
        for blk in blocks
    )
    kernels: dict[int, tuple[KernelCreditEntry, ...]] = {}
    for blk in blocks:
        first, last = blk.layer_range
        kinds = {net.layers[i].kind for i in range(first, last + 1)}
        out_shape = net.boundary_shapes[last + 1]
        if "conv2d" in kinds and len(out_shape) == 3:
            meta = ConvChannelMeta.from_output_shape(out_shape)
            kernels[blk.id] = tuple(
                kernel_credit(means[blk.id], meta, config.sv_tolerance)
            )
    composed = feature_weights(means)
    embed_rule = [embed_dim(blk) for blk in blocks]
    metadata = {
        "model_name": net.name,
        "model_file": config.model,
        "input_shape": [int(v) for v in net.input_shape],
        "boundary_dims": net.boundary_dims,
        "partition": [list(r) for r in config.partition_ranges],
        "block_names": [_block_name(net, blk) for blk in blocks],
        "block_categories": [blk.category for blk in blocks],
        "samples": config.samples,
        "repeats": config.repeats,
        "seed": config.seed,
        "d_cap": config.d_cap,
        "sv_tolerance": config.sv_tolerance,
        "dataset": _dataset_metadata(config.dataset),
        "embed_dims": {
            "rule": embed_rule,
            "effective": [min(v, config.d_cap) for v in embed_rule],
        },
        "alignment_seeds": alignment_seeds,
        "fit_residuals": fit_residuals,
        "uniform_credit_warning": uniform,
        "koopcredit_version": _package_version(),
    }
    return CreditReport(
        blocks=entries,
        kernel_credits=kernels,
        feature_weights=composed,
        metadata=metadata,
    )


def _dataset_metadata(ds: DatasetConfig) -> dict:
    if ds.kind == "mnist_idx":
        return {
            "kind": ds.kind,
            "images": ds.images,
            "labels": ds.labels,
            "pool_9x9": ds.pool_9x9,
            "limit": ds.limit,
        }
    return {"kind": ds.kind, "mean": ds.mean, "std": ds.std}


def report_to_dict(report: CreditReport) -> dict:
    """Plain-JSON-type view of a report (tuples become lists)."""
    return {
        "schema": REPORT_SCHEMA,
        "blocks": [dataclasses.asdict(e) for e in report.blocks],
        "kernel_credits": {
            str(bid): [dataclasses.asdict(e) for e in entries]
            for bid, entries in report.kernel_credits.items()
        },
        "feature_weights": (
            None
            if report.feature_weights is None
            else report.feature_weights.tolist()
        ),
        "metadata": report.metadata,
    }


def report_from_dict(obj: dict) -> CreditReport:
    """Inverse of :func:`report_to_dict`; raises DataFormatError."""
    if not isinstance(obj, dict):
        raise DataFormatError("report must be a JSON object")
    if obj.get("schema") != REPORT_SCHEMA:
        raise DataFormatError(
            f"unsupported report schema {obj.get('schema')!r}, "
            f"expected {REPORT_SCHEMA!r}"
        )
    try:
        blocks = tuple(
            BlockCreditEntry(**entry) for entry in obj["blocks"]
        )
        kernels = {
            int(bid): tuple(KernelCreditEntry(**e) for e in entries)
            for bid, entries in obj["kernel_credits"].items()
        }
        fw = obj["feature_weights"]
        weights = None if fw is None else np.asarray(fw, dtype=np.float64)
        metadata = obj["metadata"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed report: {exc}") from exc
    if not isinstance(metadata, dict):
        raise DataFormatError("report metadata must be an object")
    return CreditReport(
        blocks=blocks,
        kernel_credits=kernels,
        feature_weights=weights,
        metadata=metadata,
    )


def load_report(path) -> CreditReport:
    """Read a report.json written by :func:`export_report`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    return report_from_dict(obj)


def _write_atomic(path: str, content: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)
    os.replace(tmp, path)


def _csv_content(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _heatmap_shape(metadata: dict) -> tuple[int, int] | None:
    shape = metadata.get("input_shape")
    if not isinstance(shape, (list, tuple)):
        return None
    if len(shape) == 3 and shape[0] == 1:
        return int(shape[1]), int(shape[2])
    if len(shape) == 2:
        return int(shape[0]), int(shape[1])
    if len(shape) == 1:
        side = math.isqrt(int(shape[0]))
        if side * side == int(shape[0]):
            return side, side
    return None


def _pgm_content(row: np.ndarray, height: int, width: int) -> str:
    img = row.reshape(height, width)
    lo = float(img.min())
    hi = float(img.max())
    if hi > lo:
        scaled = np.rint((img - lo) / (hi - lo) * 255.0).astype(int)
    else:
        scaled = np.zeros((height, width), dtype=int)
    lines = [" ".join(str(v) for v in line) for line in scaled]
    return f"P2\n{width} {height}\n255\n" + "\n".join(lines) + "\n"


def export_report(report: CreditReport, out_dir) -> list[str]:
    """Write the report directory; returns the paths written.

    Files: report.json (the full state, byte-stable across identical
    runs), credits.csv, kernel_credits.csv, feature_weights.csv, and one
    feature_class_<i>.pgm heatmap per output when the input layout is a
    2-d image. Every file is written to a temp name in the target
    directory and renamed into place, so interrupted exports never leave
    a partial file behind.
    """
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    files: dict[str, str] = {}
    files["report.json"] = (
        json.dumps(report_to_dict(report), sort_keys=True, separators=(",", ":"))
        + "\n"
    )
    files["credits.csv"] = _csv_content(
        ["block_id", "name", "log10_credit", "share", "rank", "degenerate"],
        [
            [
                e.block_id,
                e.name,
                repr(e.log10_credit),
                repr(e.credit_share),
                e.rank,
                str(e.degenerate).lower(),
            ]
            for e in report.blocks
        ],
    )
    files["kernel_credits.csv"] = _csv_content(
        ["block_id", "channel", "value", "log10_value", "rank", "degenerate"],
        [
            [
                bid,
                e.channel,
                repr(e.value),
                repr(e.log10_value),
                e.rank,
                str(e.degenerate).lower(),
            ]
            for bid in sorted(report.kernel_credits)
            for e in report.kernel_credits[bid]
        ],
    )
    if report.feature_weights is not None:
        weights = report.feature_weights
        files["feature_weights.csv"] = _csv_content(
            ["out_idx", "in_idx", "weight"],
            [
                [i, j, repr(float(weights[i, j]))]
                for i in range(weights.shape[0])
                for j in range(weights.shape[1])
            ],
        )
        hw = _heatmap_shape(report.metadata)
        if hw is not None and weights.shape[1] == hw[0] * hw[1]:
            for i in range(weights.shape[0]):
                files[f"feature_class_{i}.pgm"] = _pgm_content(
                    weights[i], hw[0], hw[1]
                )
    written = []
    for name, content in files.items():
        path = os.path.join(out_dir, name)
        _write_atomic(path, content)
        written.append(path)
    return written


def _cmd_analyze(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.repeats is not None:
        if args.repeats < 1:
            raise ConfigError("--repeats must be >= 1")
        config = dataclasses.replace(config, repeats=args.repeats)
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError("--samples must be >= 1")
        config = dataclasses.replace(config, samples=args.samples)
    out_dir = args.out or config.output_dir or "credit-out"
    report = run_analysis(config)
    written = export_report(report, out_dir)
    for e in report.blocks:
        print(
            f"block {e.block_id} rank {e.rank} share {e.credit_share:.4f} "
            f"log10 {e.log10_credit:.4f} {e.name}"
        )
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def _read_input_csv(path) -> np.ndarray:
    """Rows of comma-separated numbers -> (n, dim) batch."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}: line {lineno}: {exc}"
                ) from exc
    if not rows:
        raise DataFormatError(f"{path}: no input rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataFormatError(
            f"{path}: rows have inconsistent lengths {sorted(widths)}"
        )
    return np.asarray(rows, dtype=np.float64)


def _cmd_forward(args) -> int:
    net = load_model(args.model)
    batch = _read_input_csv(args.input)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    for x in batch:
        output, _ = forward(net, x)
        writer.writerow([repr(float(v)) for v in output])
    return 0


def _cmd_inspect_model(args) -> int:
    net = load_model(args.model)
    print(f"model: {net.name}")
    print(f"input shape: {tuple(net.input_shape)}")
    for i, layer in enumerate(net.layers):
        out_shape = net.boundary_shapes[i + 1]
        print(f"  layer {i}: {layer.kind} -> {tuple(out_shape)}")
    dims = " ".join(str(d) for d in net.boundary_dims)
    print(f"boundary dims: {dims}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--quiet",
        action="store_true",
        help="log only warnings and errors to stderr",
    )
    parser = argparse.ArgumentParser(
        prog="credit",
        description="Block credit assignment for feedforward networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_analyze = sub.add_parser(
        "analyze",
        parents=[common],
        help="run a credit analysis described by a config file",
    )
    p_analyze.add_argument(
        "--config", required=True, help="path to the analysis config JSON"
    )
    p_analyze.add_argument(
        "--out",
        help="directory for report artifacts (default: the config's "
        "output_dir, else ./credit-out)",
    )
    p_analyze.add_argument(
        "--seed", type=int, help="override the config's master seed"
    )
    p_analyze.add_argument(
        "--repeats", type=int, help="override the config's repeat count"
    )
    p_analyze.add_argument(
        "--samples", type=int, help="override the config's sample count"
    )
    p_forward = sub.add_parser(
        "forward",
        parents=[common],
        help="evaluate the network on a CSV of input rows",
    )
    p_forward.add_argument(
        "--model", required=True, help="path to the model JSON"
    )
    p_forward.add_argument(
        "--input",
        required=True,
        help="CSV file, one flat input vector per row; outputs are "
        "written to stdout one CSV row per input",
    )
    p_inspect = sub.add_parser(
        "inspect-model",
        parents=[common],
        help="validate a model file and print its layout",
    )
    p_inspect.add_argument(
        "--model", required=True, help="path to the model JSON"
    )
    return parser


def main(argv=None) -> int:
    """Console entry point; returns the process exit code."""
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s: %(message)s",
    )
    handlers = {
        "analyze": _cmd_analyze,
        "forward": _cmd_forward,
        "inspect-model": _cmd_inspect_model,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ModelFormatError, ShapeError) as exc:
        logger.error("%s", exc)
        return 2
    except (NumericalError, AnalysisError) as exc:
        logger.error("%s", exc)
        return 3
    except (DataFormatError, OSError) as exc:
        logger.error("%s", exc)
        return 4
