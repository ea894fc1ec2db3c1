"""Credit assignment from fitted block operators.

A block's credit is the generalized absolute determinant of its decomposed
operator: the product of singular values above a cutoff. Raw products
overflow quickly for wide blocks, so every quantity here travels with a
log10 twin and all cross-block arithmetic happens in log space with
exactly rounded summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeError
from .koopman import KoopmanOperator
from .linalg import as_matrix, default_sv_tolerance, singular_values

__all__ = [
    "BlockCreditEntry",
    "KernelCreditEntry",
    "ConvChannelMeta",
    "CreditReport",
    "block_credit",
    "block_sensitivity_log10",
    "block_sensitivity",
    "normalize_credits",
    "kernel_credit",
    "feature_weights",
    "feature_heatmaps",
    "mean_operator",
]

# Log10 gap below which two credits are considered tied when ranking.
RANK_TIE_TOL = 1e-9


def _operator_matrix(operator) -> np.ndarray:
    if isinstance(operator, KoopmanOperator):
        return as_matrix(operator.matrix)
    return as_matrix(operator)


def block_credit(operator, tol: float | None = None) -> tuple[float, float, bool]:
    """Credit of one block: (value, log10 value, degenerate flag).

    ``operator`` is a KoopmanOperator or a plain matrix. The value is the
    product of singular values above the cutoff (same rule as
    linalg.gen_absdet, computed from a single decomposition here); the
    flag is True when any singular value fell at or below the cutoff. The
    raw value may overflow to inf for wide blocks; the log10 twin is the
    number to compare and aggregate.
    """
    m = _operator_matrix(operator)
    s = singular_values(m)
    if tol is None:
        tol = default_sv_tolerance(m.shape, float(s[0]) if s.size else 0.0)
    kept = s[s > tol]
    degenerate = bool(kept.size < s.size)
    with np.errstate(over="ignore", under="ignore"):
        value = float(np.prod(kept))
    log10_value = math.fsum(np.log10(kept)) if kept.size else 0.0
    return value, log10_value, degenerate


def block_sensitivity_log10(
    log10_credits: Sequence[float], shapes: Sequence[tuple[int, int]]
) -> list[float] | None:
    """log10 sensitivity of the composed chain to each block.

    For a chain of blocks that all carry square operators of one common
    order n, perturbing block i moves the chain determinant through the
    Kronecker-product Jacobian of the surrounding factors, whose absolute
    determinant is (prod_{s != i} |K_s|)^n. This returns that quantity's
    log10 for each block, computed as n times the exactly rounded sum of
    the other blocks' log10 credits (so the result is invariant under
    reordering of those blocks).

    Returns None when the operators are not all square with equal order,
    where the chain determinant calculus does not apply.
    """
    shapes = [tuple(int(v) for v in s) for s in shapes]
    if len(shapes) != len(log10_credits):
        raise ShapeError(
            f"got {len(log10_credits)} credits but {len(shapes)} shapes"
        )
    if not shapes:
        return []
    n = shapes[0][0]
    if any(s != (n, n) for s in shapes):
        return None
    values = [float(v) for v in log10_credits]
    out = []
    for i in range(len(values)):
        others = values[:i] + values[i + 1 :]
        out.append(n * math.fsum(others))
    return out


def block_sensitivity(
    operators: Sequence, i: int, tol: float | None = None
) -> float | None:
    """Sensitivity of a composed chain to block i (may overflow to inf).

    ``operators`` are the chain's matrices (or KoopmanOperators) in
    network order. Returns (prod_{s != i} gen_absdet(K_s))^n for a chain
    of square order-n operators, computed in log space and exponentiated
    at the end. Returns None ("not applicable") when the operators are
    not all square of one order; inapplicability is a value, not an
    error.
    """
    mats = [_operator_matrix(op) for op in operators]
    if not 0 <= i < len(mats):
        raise ShapeError(
            f"block index {i} out of range for a {len(mats)}-block chain"
        )
    logs = [block_credit(m, tol)[1] for m in mats]
    per_block = block_sensitivity_log10(logs, [m.shape for m in mats])
    if per_block is None:
        return None
    with np.errstate(over="ignore", under="ignore"):
        return float(np.power(10.0, per_block[i]))


def _dense_ranks(log10_values: np.ndarray) -> list[int]:
    """Dense descending ranks with near-ties sharing a rank.

    Values are sorted descending and split into groups wherever the gap
    to the previous value exceeds RANK_TIE_TOL; all members of the g-th
    group get rank g+1.
    """
    order = np.argsort(-log10_values, kind="stable")
    ranks = [0] * log10_values.size
    rank = 0
    prev = None
    for pos in order:
        v = log10_values[pos]
        if prev is None or prev - v > RANK_TIE_TOL:
            rank += 1
        ranks[pos] = rank
        prev = v
    return ranks


def normalize_credits(
    log10_credits: Sequence[float],
    degenerate: Sequence[bool] | None = None,
) -> tuple[np.ndarray, list[int], bool]:
    """Shares and ranks from log10 credits.

    Shares are softmax-like weights 10**(l - max) normalized to sum 1,
    computed with the common offset so that huge log values never
    overflow. Ranks are dense descending ranks (1 = largest credit) with
    |delta log10| <= 1e-9 treated as a tie.

    When every block is flagged degenerate with an empty product (log10
    exactly 0), the credits carry no information; shares fall back to
    uniform and the third return value is True.
    """
    logs = np.asarray(list(log10_credits), dtype=np.float64)
    if logs.ndim != 1 or logs.size == 0:
        raise ShapeError("need a non-empty 1-d sequence of log10 credits")
    if not np.isfinite(logs).all():
        raise ShapeError("log10 credits must be finite")
    uniform = False
    if degenerate is not None:
        flags = list(degenerate)
        if len(flags) != logs.size:
            raise ShapeError(
                f"got {logs.size} credits but {len(flags)} degeneracy flags"
            )
        if all(flags) and bool(np.all(logs == 0.0)):
            uniform = True
    if uniform:
        shares = np.full(logs.size, 1.0 / logs.size)
    else:
        scaled = np.power(10.0, logs - logs.max())
        shares = scaled / scaled.sum()
    return shares, _dense_ranks(logs), uniform


@dataclass(frozen=True)
class ConvChannelMeta:
    """Row layout of a channel-shaped block output.

    ``channel_row_ranges[c]`` is the half-open (start, stop) row range of
    output channel c inside the block operator, under (channel, row, col)
    row-major flattening.
    """

    out_channels: int
    channel_row_ranges: tuple[tuple[int, int], ...]

    @classmethod
    def from_output_shape(cls, shape: Sequence[int]) -> "ConvChannelMeta":
        if len(shape) != 3:
            raise ShapeError(
                f"channel metadata needs a (channels, rows, cols) output "
                f"shape, got {tuple(shape)}"
            )
        channels, rows, cols = (int(v) for v in shape)
        plane = rows * cols
        ranges = tuple(
            (c * plane, (c + 1) * plane) for c in range(channels)
        )
        return cls(out_channels=channels, channel_row_ranges=ranges)


@dataclass(frozen=True)
class KernelCreditEntry:
    """Credit of one output channel's rows of a block operator."""

    channel: int
    value: float
    log10_value: float
    degenerate: bool
    rank: int


def kernel_credit(
    operator, meta: ConvChannelMeta, tol: float | None = None
) -> list[KernelCreditEntry]:
    """Per-channel credits of a channel-shaped block operator.

    Each channel's credit is the generalized absolute determinant of the
    row slice of the operator that produces that channel. Ranks are dense
    descending ranks across the channels of this block.
    """
    m = _operator_matrix(operator)
    if meta.out_channels != len(meta.channel_row_ranges):
        raise ShapeError(
            f"metadata declares {meta.out_channels} channels but "
            f"{len(meta.channel_row_ranges)} row ranges"
        )
    for c, (start, stop) in enumerate(meta.channel_row_ranges):
        if not (0 <= start < stop <= m.shape[0]):
            raise ShapeError(
                f"channel {c} rows [{start}, {stop}) fall outside the "
                f"{m.shape[0]}-row operator"
            )
    values = []
    logs = []
    flags = []
    for start, stop in meta.channel_row_ranges:
        value, log10_value, degenerate = block_credit(m[start:stop], tol)
        values.append(value)
        logs.append(log10_value)
        flags.append(degenerate)
    ranks = _dense_ranks(np.asarray(logs))
    return [
        KernelCreditEntry(
            channel=c,
            value=values[c],
            log10_value=logs[c],
            degenerate=flags[c],
            rank=ranks[c],
        )
        for c in range(meta.out_channels)
    ]


def feature_weights(operators: Sequence) -> np.ndarray:
    """Compose decomposed block operators into one end-to-end linear map.

    Blocks are given in network order (input side first); the result is
    K_last @ ... @ K_first, mapping network inputs to network outputs.
    Row i is then the input-space weight pattern feeding output i.
    """
    mats = [_operator_matrix(op) for op in operators]
    if not mats:
        raise ShapeError("need at least one block operator to compose")
    result = mats[0]
    for i, nxt in enumerate(mats[1:], start=1):
        if nxt.shape[1] != result.shape[0]:
            raise ShapeError(
                f"block {i} expects {nxt.shape[1]} inputs but block "
                f"{i - 1} produces {result.shape[0]} outputs"
            )
        result = nxt @ result
    return result


def feature_heatmaps(weights, shape: Sequence[int]) -> np.ndarray:
    """Reshape each feature-weight row to the input's spatial layout."""
    w = as_matrix(weights)
    shape = tuple(int(v) for v in shape)
    expected = int(np.prod(shape))
    if w.shape[1] != expected:
        raise ShapeError(
            f"weight rows have {w.shape[1]} entries; input shape "
            f"{shape} needs {expected}"
        )
    return w.reshape((w.shape[0],) + shape).copy()


def mean_operator(matrices: Sequence) -> np.ndarray:
    """Entrywise mean of same-shaped operators (left-to-right sum)."""
    mats = [_operator_matrix(m) for m in matrices]
    if not mats:
        raise ShapeError("need at least one operator to average")
    total = mats[0].copy()
    for i, m in enumerate(mats[1:], start=1):
        if m.shape != total.shape:
            raise ShapeError(
                f"operator {i} has shape {m.shape}, expected {total.shape}"
            )
        total += m
    return total / len(mats)


@dataclass(frozen=True)
class BlockCreditEntry:
    """Final per-block row of a credit report.

    ``sensitivity`` is the raw chain sensitivity (None when the chain has
    mixed operator shapes, where it is not applicable; it can be inf for
    large well-conditioned chains, which is why the credit fields also
    travel as log10).
    """

    block_id: int
    name: str
    gen_absdet: float
    log10_credit: float
    degenerate: bool
    credit_share: float
    rank: int
    sensitivity: float | None = None


@dataclass(eq=False)
class CreditReport:
    """Everything one analysis run produced.

    ``kernel_credits`` maps block id to that block's per-channel entries.
    ``feature_weights`` is the composed end-to-end map (may be None when
    a caller builds a partial report). Equality is value-based, with the
    array compared elementwise, so reports survive a serialization round
    trip intact.
    """

    blocks: tuple[BlockCreditEntry, ...]
    kernel_credits: dict[int, tuple[KernelCreditEntry, ...]] = field(
        default_factory=dict
    )
    feature_weights: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CreditReport):
            return NotImplemented
        if self.blocks != other.blocks:
            return False
        if self.kernel_credits != other.kernel_credits:
            return False
        if self.metadata != other.metadata:
            return False
        if (self.feature_weights is None) != (other.feature_weights is None):
            return False
        if self.feature_weights is None:
            return True
        return bool(
            self.feature_weights.shape == other.feature_weights.shape
            and np.array_equal(self.feature_weights, other.feature_weights)
        )
