"""Dimension alignment for blocks whose input and output widths differ.

A block mapping in_dim to out_dim is wrapped with a random full-rank
matrix ``b`` (out_dim x in_dim) and its pseudoinverse ``a`` so that the
wrapped map has equal input and output width and can be iterated:

* L2S and E2E blocks (out <= in): ``a`` is composed after the block, the
  iterated state lives in R^in_dim, and a fitted square operator K is
  decomposed as b @ K. Exact for linear blocks because b @ a = I_out.
* S2L blocks (out > in): ``a`` is composed before the block, the iterated
  state lives in R^out_dim, trajectories are seeded with b @ x so the
  first step reproduces the block's true behavior on x (a @ b = I_in),
  and decomposition is K @ b.

Either way the aligned state width is max(in_dim, out_dim) and the stored
residual is the Frobenius distance of b @ a from the identity on the
output side, which for a full-rank draw equals sqrt(max(out - in, 0)),
the smallest value any choice of right inverse can achieve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError
from .linalg import as_vector, default_sv_tolerance
from .model import Block, NetworkModel, block_forward, block_forward_batch

__all__ = [
    "AlignmentPair",
    "MAX_DRAW_ATTEMPTS",
    "make_alignment",
    "aligned_dim",
    "initial_state",
    "initial_state_batch",
    "aligned_step",
    "aligned_step_batch",
    "decompose_operator",
]

logger = logging.getLogger(__name__)

MAX_DRAW_ATTEMPTS = 8


@dataclass(frozen=True, eq=False)
class AlignmentPair:
    """A matched alignment pair: ``a`` is the pseudoinverse of ``b``.

    b is out_dim x in_dim, a is in_dim x out_dim, residual is
    ||b @ a - I_out||_F, and seed records the integer that reproduces the
    draw.
    """

    b: np.ndarray
    a: np.ndarray
    residual: float
    seed: int

    @property
    def out_dim(self) -> int:
        return self.b.shape[0]

    @property
    def in_dim(self) -> int:
        return self.b.shape[1]


def make_alignment(
    out_dim: int,
    in_dim: int,
    seed: int,
    rank_tol: float | None = None,
) -> AlignmentPair:
    """Draw a full-rank alignment pair for the given block widths.

    Entries of b are i.i.d. standard normal from a generator seeded with
    ``seed``. If a draw is rank-deficient (smallest singular value at or
    below the tolerance), up to MAX_DRAW_ATTEMPTS child streams of the
    same seed are tried before giving up. Equal widths short-circuit to
    b = a = I with residual 0.
    """
    if out_dim < 1 or in_dim < 1:
        raise ShapeError(
            f"alignment dims must be positive, got out={out_dim}, in={in_dim}"
        )
    if out_dim == in_dim:
        eye = np.eye(out_dim)
        return AlignmentPair(b=eye, a=eye.copy(), residual=0.0, seed=seed)
    children = np.random.SeedSequence(seed).spawn(MAX_DRAW_ATTEMPTS)
    for attempt, child in enumerate(children):
        b = np.random.default_rng(child).standard_normal((out_dim, in_dim))
        u, s, vt = np.linalg.svd(b, full_matrices=False)
        tol = rank_tol
        if tol is None:
            tol = default_sv_tolerance(b.shape, float(s[0]))
        rank = int(np.count_nonzero(s > tol))
        if rank < min(out_dim, in_dim):
            logger.warning(
                "alignment draw %d for %dx%d (seed %d) was rank deficient, "
                "retrying with next substream",
                attempt,
                out_dim,
                in_dim,
                seed,
            )
            continue
        a = (vt.T / s) @ u.T
        # b @ a is the orthogonal projector onto col(b); its Frobenius
        # distance from I_out is exactly sqrt(out - rank).
        residual = float(np.sqrt(max(out_dim - rank, 0)))
        return AlignmentPair(b=b, a=a, residual=residual, seed=seed)
    raise NumericalError(
        f"could not draw a full-rank {out_dim}x{in_dim} alignment in "
        f"{MAX_DRAW_ATTEMPTS} attempts (seed {seed})"
    )


def aligned_dim(pair: AlignmentPair) -> int:
    """Width of the aligned state space: max(in_dim, out_dim)."""
    return max(pair.out_dim, pair.in_dim)


def _lifts_input(pair: AlignmentPair) -> bool:
    """True for S2L pairs, whose aligned state lives on the output side."""
    return pair.out_dim > pair.in_dim


def initial_state(pair: AlignmentPair, x) -> np.ndarray:
    """Aligned trajectory start for a block input x.

    L2S/E2E states are block inputs already; S2L states are lifted with b,
    so that the first aligned step sees a @ (b @ x) = x exactly.
    """
    x = as_vector(x)
    if x.size != pair.in_dim:
        raise ShapeError(
            f"block input has length {x.size}, expected {pair.in_dim}"
        )
    if _lifts_input(pair):
        return pair.b @ x
    return x.copy()


def initial_state_batch(pair: AlignmentPair, xs: np.ndarray) -> np.ndarray:
    """Batch twin of :func:`initial_state` for (n, in_dim) inputs."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != pair.in_dim:
        raise ShapeError(
            f"expected batch shape (n, {pair.in_dim}), got {xs.shape}"
        )
    if _lifts_input(pair):
        return xs @ pair.b.T
    return xs.copy()


def aligned_step(
    model: NetworkModel, block: Block, pair: AlignmentPair, state
) -> np.ndarray:
    """One step of the width-aligned block map.

    The state vector has the aligned width max(in_dim, out_dim) and the
    result has the same width, so the map can be iterated. For L2S/E2E
    this computes a @ block(state); for S2L it computes block(a @ state).
    """
    state = as_vector(state)
    n_a = aligned_dim(pair)
    if state.size != n_a:
        raise ShapeError(
            f"aligned state has length {state.size}, expected {n_a}"
        )
    if _lifts_input(pair):
        return block_forward(model, block, pair.a @ state)
    return pair.a @ block_forward(model, block, state)


def aligned_step_batch(
    model: NetworkModel, block: Block, pair: AlignmentPair, states: np.ndarray
) -> np.ndarray:
    """Batch twin of :func:`aligned_step` for (n, aligned_dim) states."""
    if _lifts_input(pair):
        return block_forward_batch(model, block, states @ pair.a.T)
    return block_forward_batch(model, block, states) @ pair.a.T


def decompose_operator(pair: AlignmentPair, k_aligned) -> np.ndarray:
    """Undo the alignment on a fitted square operator.

    Dispatches on the operator's width: an in_dim-square operator was
    fitted with the alignment composed after the block and decomposes as
    b @ K; an out_dim-square operator was fitted with the alignment
    composed before the block and decomposes as K @ b. The result is
    always out_dim x in_dim.
    """
    k = np.asarray(k_aligned, dtype=np.float64)
    n_out, n_in = pair.out_dim, pair.in_dim
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ShapeError(
            f"aligned operator must be square, got shape {k.shape}"
        )
    if k.shape[0] == n_in:
        return pair.b @ k
    if k.shape[0] == n_out:
        return k @ pair.b
    raise ShapeError(
        f"aligned operator of width {k.shape[0]} matches neither in_dim "
        f"{n_in} nor out_dim {n_out}"
    )
