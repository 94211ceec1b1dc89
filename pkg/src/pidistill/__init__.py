"""Privileged-information distillation on frozen encoder embeddings.

Train image-only classifier heads on precomputed token embeddings, either
directly or by distilling from a multimodal image+report teacher, with a
deterministic training loop, a synthetic causal-graph benchmark, and a
sweep harness that writes figure-ready tables.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    EmbeddingDataset,
    Record,
    SplitPlan,
    balance_by_label,
    load_dataset,
    make_split,
    split_hash,
    write_dataset,
)
from .errors import (
    ConfigError,
    DataError,
    GradCheckError,
    LoadError,
    PidistillError,
    ShapeError,
    TrainingError,
    UndefinedMetricError,
)
from .figures import emit_plotdata, render_figures
from .heads import (
    AttentionPoolHead,
    LinearClassifier,
    StudentClassifier,
    TeacherClassifier,
    assign_parameters,
)
from .metrics import (
    MetricSummary,
    ScoredSet,
    aggregate,
    auc_binary,
    auc_multiclass,
    auprc,
    auprc_binary,
)
from .sweep import SweepCell, SweepConfig, SweepOutcome, plan_sweep, run_sweep
from .synthgen import (
    SCMConfig,
    SCMGroundTruth,
    generate,
    load_ground_truth,
    monte_carlo_view_aucs,
    oracle_auc,
    save_ground_truth,
)
from .tensor import GradTape, Matrix, grad_check
from .training import (
    TrainConfig,
    TrainResult,
    rebuild_model,
    train_student,
    train_teacher,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
