"""Koopman operator estimation for width-aligned blocks.

A block is turned into an iterable map by :mod:`koopcredit.alignment`,
iterated 2d+1 steps per seed input (step-delay embedding, d being the
smallest boundary width the block touches), and the pooled snapshot pairs
are fitted with dynamic mode decomposition: the square operator K that
minimizes the summed squared one-step prediction error, computed as
Y @ pinv(X) (the minimum-Frobenius-norm least squares solution).

For blocks whose aligned state provably lives in a small known subspace
(L2S: every post-step state is in col(a), every seed state is given), the
fit can be carried out in that subspace via an orthonormal basis without
changing the result; see :func:`dmd_fit`'s range_basis parameter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .alignment import (
    AlignmentPair,
    aligned_dim,
    aligned_step_batch,
    initial_state_batch,
)
from .errors import NumericalError, ShapeError
from .linalg import default_sv_tolerance, frobenius_norm
from .model import Block, NetworkModel

__all__ = [
    "SnapshotSeries",
    "KoopmanOperator",
    "embed_dim",
    "generate_snapshots",
    "dmd_fit",
    "fit_block",
    "write_snapshot_csv",
]

logger = logging.getLogger(__name__)

# Use the subspace-reduced fit only when it shrinks the working width by a
# real margin; below this ratio the extra QR is not worth it.
_BASIS_PROFIT_RATIO = 0.8


@dataclass(eq=False)
class SnapshotSeries:
    """Aligned trajectories for one block.

    ``states`` holds one (2d+1, state_dim) array per surviving seed input,
    rows ordered by step. state_dim is the aligned width of the block,
    max(in_dim, out_dim).
    """

    block_id: int
    d: int
    states: list[np.ndarray]

    @property
    def seed_count(self) -> int:
        return len(self.states)

    @property
    def state_dim(self) -> int:
        return self.states[0].shape[1]


@dataclass(eq=False)
class KoopmanOperator:
    """A fitted block operator.

    ``matrix`` is the decomposed out_dim x in_dim operator acting on block
    inputs. ``aligned_matrix`` is the square operator in the aligned state
    space (None when the caller asked not to materialize it).
    ``fit_residual`` is ||K X - Y||_F / max(1, ||Y||_F) over the training
    pairs.
    """

    block_id: int
    matrix: np.ndarray
    aligned_matrix: np.ndarray | None
    fit_residual: float


def embed_dim(block: Block) -> int:
    """Step-delay depth d: the smallest boundary width inside the block.

    The aligned state width is max(in_dim, out_dim), so wrapping the block
    never lowers this minimum.
    """
    return int(min(block.layer_dims))


def generate_snapshots(
    model: NetworkModel,
    block: Block,
    pair: AlignmentPair,
    seed_inputs,
    d: int,
) -> SnapshotSeries:
    """Iterate the aligned block map 2d steps from each seed input.

    seed_inputs is an (n, in_dim) batch of block inputs (typically taken
    from forward traces on real data). Trajectories containing non-finite
    states are dropped with a warning; if every trajectory is dropped a
    NumericalError is raised.
    """
    if d < 1:
        raise ShapeError(f"embedding depth must be >= 1, got {d}")
    xs = np.asarray(seed_inputs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != block.in_dim:
        raise ShapeError(
            f"seed inputs must have shape (n, {block.in_dim}), got {xs.shape}"
        )
    if xs.shape[0] < 1:
        raise ShapeError("at least one seed input is required")
    n = xs.shape[0]
    n_a = aligned_dim(pair)
    steps = 2 * d + 1
    states = np.empty((steps, n, n_a))
    with np.errstate(all="ignore"):
        cur = initial_state_batch(pair, xs)
        states[0] = cur
        for k in range(1, steps):
            cur = aligned_step_batch(model, block, pair, cur)
            states[k] = cur
    finite_by_step = np.isfinite(states).all(axis=2)
    finite = finite_by_step.all(axis=0)
    dropped = np.flatnonzero(~finite)
    if dropped.size:
        where = ", ".join(
            f"seed {i} at step {int(np.argmin(finite_by_step[:, i]))}"
            for i in dropped.tolist()
        )
        logger.warning(
            "block %d: dropping %d of %d trajectories with non-finite "
            "states (first occurrence: %s)",
            block.id,
            dropped.size,
            n,
            where,
        )
    if not finite.any():
        raise NumericalError(
            f"block {block.id}: all {n} trajectories produced non-finite "
            "states"
        )
    kept = [
        np.ascontiguousarray(states[:, i, :]) for i in np.flatnonzero(finite)
    ]
    return SnapshotSeries(block_id=block.id, d=int(d), states=kept)


def _stack_pairs(series: SnapshotSeries) -> tuple[np.ndarray, np.ndarray]:
    """Snapshot matrices X (states 0..2d-1) and Y (states 1..2d).

    Columns are ordered seed-major, step-minor, each of width state_dim.
    """
    arr = np.stack(series.states, axis=0)
    n_seeds, steps, n_a = arr.shape
    x = arr[:, :-1, :].reshape(n_seeds * (steps - 1), n_a)
    y = arr[:, 1:, :].reshape(n_seeds * (steps - 1), n_a)
    return np.ascontiguousarray(x.T), np.ascontiguousarray(y.T)


def _truncated_pinv(
    x: np.ndarray, tol: float | None, label: str
) -> tuple[np.ndarray, int, int]:
    """Pseudoinverse of the snapshot matrix with truncation logging."""
    try:
        u, s, vt = np.linalg.svd(x, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"{label}: SVD did not converge for "
            f"{x.shape[0]}x{x.shape[1]} snapshot matrix"
        ) from exc
    if tol is None:
        tol = default_sv_tolerance(x.shape, float(s[0]) if s.size else 0.0)
    keep = s > tol
    kept = int(np.count_nonzero(keep))
    logger.debug(
        "%s: keeping %d of %d singular values (tol %.3e)",
        label,
        kept,
        s.size,
        tol,
    )
    if kept == 0:
        return np.zeros((x.shape[1], x.shape[0])), 0, int(s.size)
    p = (vt[keep].T / s[keep]) @ u[:, keep].T
    return p, kept, int(s.size)


def _fit_working(
    x: np.ndarray, y: np.ndarray, tol: float | None, label: str
) -> tuple[np.ndarray, np.ndarray | None, float]:
    """Least squares fit in the working space.

    Returns (pinv(x), operator or None, relative residual). The operator
    y @ pinv(x) is materialized here only when that is the cheap way to
    get the residual (more columns than rows); otherwise the caller
    assembles whatever products it needs from the pseudoinverse.
    """
    p, _, _ = _truncated_pinv(x, tol, label)
    k = None
    if x.shape[1] <= x.shape[0]:
        resid_num = frobenius_norm(y @ (p @ x) - y)
    else:
        k = y @ p
        resid_num = frobenius_norm(k @ x - y)
    residual = resid_num / max(1.0, frobenius_norm(y))
    return p, k, residual


def _validated_basis(q, n_a: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[0] != n_a:
        raise ShapeError(
            f"range basis must have shape ({n_a}, r), got {q.shape}"
        )
    gram = q.T @ q
    if not np.allclose(gram, np.eye(q.shape[1]), atol=1e-8):
        raise ShapeError("range basis columns must be orthonormal")
    return q


def dmd_fit(
    series: SnapshotSeries,
    tol: float | None = None,
    range_basis: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """Fit the square aligned operator K = Y @ pinv(X, tol).

    Returns (operator, fit_residual). ``range_basis``, when given, must be
    a column-orthonormal matrix whose span contains every snapshot state;
    then pinv(Q @ Xw) = pinv(Xw) @ Q^T makes the reduced fit exactly equal
    to the direct one (all four Penrose conditions hold for the product),
    just computed at the smaller width.
    """
    x, y = _stack_pairs(series)
    label = f"block {series.block_id} dmd"
    if range_basis is None:
        p, k, residual = _fit_working(x, y, tol, label)
        if k is None:
            k = y @ p
        return k, residual
    q = _validated_basis(range_basis, x.shape[0])
    xw = q.T @ x
    yw = q.T @ y
    p, kw, residual = _fit_working(xw, yw, tol, label)
    if kw is None:
        kw = yw @ p
    return q @ kw @ q.T, residual


def _subspace_basis(
    pair: AlignmentPair, series: SnapshotSeries
) -> np.ndarray | None:
    """Orthonormal basis containing every snapshot state, when profitable.

    Only L2S blocks qualify: their step outputs all lie in col(a) and
    their step-0 states are the seed inputs themselves, so
    col([a | seeds]) contains the whole trajectory. S2L steps pass through
    a nonlinearity after the lift and are not confined this way.
    """
    if pair.out_dim >= pair.in_dim:
        return None
    n_a = series.state_dim
    width = pair.out_dim + series.seed_count
    if width >= _BASIS_PROFIT_RATIO * n_a:
        return None
    seeds = np.stack([s[0] for s in series.states], axis=1)
    candidate = np.concatenate([pair.a, seeds], axis=1)
    q, _ = np.linalg.qr(candidate, mode="reduced")
    return q


def fit_block(
    model: NetworkModel,
    block: Block,
    pair: AlignmentPair,
    seed_inputs,
    *,
    d_cap: int = 256,
    tol: float | None = None,
    keep_aligned: bool = True,
    use_range_basis: bool = True,
) -> KoopmanOperator:
    """Full per-block pipeline: embed, iterate, fit, decompose.

    The embedding depth is min(embed_dim(block), d_cap). The returned
    operator's ``matrix`` is the decomposed out_dim x in_dim map; with
    keep_aligned=False the square aligned operator is never materialized
    (it can be large for wide blocks) and ``aligned_matrix`` is None.
    """
    if d_cap < 1:
        raise ShapeError(f"d_cap must be >= 1, got {d_cap}")
    d = min(embed_dim(block), int(d_cap))
    series = generate_snapshots(model, block, pair, seed_inputs, d)
    x, y = _stack_pairs(series)
    label = f"block {block.id} dmd"
    lifts = pair.out_dim > pair.in_dim
    basis = _subspace_basis(pair, series) if use_range_basis else None
    if basis is None:
        p, k_work, residual = _fit_working(x, y, tol, label)
        if lifts:
            # aligned operator acts on the output side: matrix = K @ b
            matrix = y @ (p @ pair.b)
        else:
            matrix = (pair.b @ y) @ p
        aligned = None
        if keep_aligned:
            aligned = k_work if k_work is not None else y @ p
    else:
        xw = basis.T @ x
        yw = basis.T @ y
        p, k_work, residual = _fit_working(xw, yw, tol, label)
        kw = k_work if k_work is not None else yw @ p
        matrix = ((pair.b @ basis) @ kw) @ basis.T
        aligned = (basis @ kw) @ basis.T if keep_aligned else None
    return KoopmanOperator(
        block_id=block.id,
        matrix=matrix,
        aligned_matrix=aligned,
        fit_residual=float(residual),
    )


def write_snapshot_csv(series: SnapshotSeries, path) -> None:
    """Dump a snapshot series as CSV rows seed,step,idx,value."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("seed,step,idx,value\n")
        for seed_idx, traj in enumerate(series.states):
            for step in range(traj.shape[0]):
                row = traj[step].tolist()
                for idx, value in enumerate(row):
                    fh.write(f"{seed_idx},{step},{idx},{value!r}\n")
