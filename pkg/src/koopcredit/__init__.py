"""Credit assignment for feedforward networks via fitted linear operators.

The pipeline: partition a network into contiguous blocks, wrap each block
into a square iterable map with a random width alignment, fit a linear
operator to short trajectories of that map (dynamic mode decomposition),
undo the alignment, and score each block by the generalized absolute
determinant of its operator. Credits are averaged over repeated random
alignments, normalized into shares, and ranked; convolutional blocks
additionally get per-output-channel credits, and the composed chain of
operators gives per-class input weight maps.

Entry points: the `credit` console command (see :mod:`koopcredit.cli`),
or programmatic use via :func:`load_config` / :func:`run_analysis` /
:func:`export_report`.
"""

from importlib.metadata import PackageNotFoundError, version

from .alignment import (
    AlignmentPair,
    aligned_dim,
    aligned_step,
    aligned_step_batch,
    decompose_operator,
    initial_state,
    initial_state_batch,
    make_alignment,
)
from .cli import (
    AnalysisConfig,
    DatasetConfig,
    export_report,
    load_config,
    load_report,
    main,
    report_from_dict,
    report_to_dict,
    run_analysis,
)
from .credit import (
    BlockCreditEntry,
    ConvChannelMeta,
    CreditReport,
    KernelCreditEntry,
    block_credit,
    block_sensitivity,
    block_sensitivity_log10,
    feature_heatmaps,
    feature_weights,
    kernel_credit,
    mean_operator,
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
from .koopman import (
    KoopmanOperator,
    SnapshotSeries,
    dmd_fit,
    embed_dim,
    fit_block,
    generate_snapshots,
    write_snapshot_csv,
)
from .linalg import (
    apply_vectorized_bilinear,
    gen_absdet,
    gen_absdet_log10,
    kron,
    pinv,
    unvec,
    vec,
)
from .model import (
    Block,
    BlockPartition,
    NetworkModel,
    batch_boundary_states,
    block_forward,
    build_model,
    forward,
    load_mnist_idx,
    load_model,
    partition,
    pool_input_9x9,
)

try:
    __version__ = version("koopcredit")
except PackageNotFoundError:
    __version__ = "0.0.0"

__all__ = [
    "__version__",
    "AlignmentPair",
    "aligned_dim",
    "aligned_step",
    "aligned_step_batch",
    "decompose_operator",
    "initial_state",
    "initial_state_batch",
    "make_alignment",
    "AnalysisConfig",
    "DatasetConfig",
    "export_report",
    "load_config",
    "load_report",
    "main",
    "report_from_dict",
    "report_to_dict",
    "run_analysis",
    "BlockCreditEntry",
    "ConvChannelMeta",
    "CreditReport",
    "KernelCreditEntry",
    "block_credit",
    "block_sensitivity",
    "block_sensitivity_log10",
    "feature_heatmaps",
    "feature_weights",
    "kernel_credit",
    "mean_operator",
    "normalize_credits",
    "AnalysisError",
    "ConfigError",
    "DataFormatError",
    "KoopcreditError",
    "ModelFormatError",
    "NumericalError",
    "ShapeError",
    "KoopmanOperator",
    "SnapshotSeries",
    "dmd_fit",
    "embed_dim",
    "fit_block",
    "generate_snapshots",
    "write_snapshot_csv",
    "apply_vectorized_bilinear",
    "gen_absdet",
    "gen_absdet_log10",
    "kron",
    "pinv",
    "unvec",
    "vec",
    "Block",
    "BlockPartition",
    "NetworkModel",
    "batch_boundary_states",
    "block_forward",
    "build_model",
    "forward",
    "load_mnist_idx",
    "load_model",
    "partition",
    "pool_input_9x9",
]
