"""Multimodal co-learning laboratory.

Two sequence architectures (a bidirectional early-fusion LSTM classifier
and a memory-fusion regressor) built on a minimal reverse-mode autodiff
engine, plus modality dropout, a synthetic-data pipeline, a seeded
training loop, and the experiment protocol that compares multimodal and
unimodal training under unimodal evaluation.
"""

from .autograd import (
    DimensionError,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    cross_entropy_loss,
    l1_loss,
    matmul,
    mul_elementwise,
    sigmoid,
    slice_along,
    softmax,
    sum_all,
    tanh_act,
)
from .data import (
    DatasetSplit,
    MultimodalBatch,
    MultimodalSample,
    SyntheticConfig,
    Task,
    generate_synthetic,
    load_dataset,
    ncl_preset,
    save_dataset,
)
from .dropout import DropoutPolicy, ModalityMask, apply_mask, draw_mask, mask_for_unimodal_eval
from .experiments import ExperimentReport, dropout_sweep, run_protocol
from .metrics import CoLearningOutcome, MetricSet, classify_outcome, compute_metrics, prediction_collapse_index
from .models import (
    BiEflstmClassifier,
    BiEflstmParams,
    Feedforward,
    LstmParams,
    MfnParams,
    MfnRegressor,
    bi_eflstm_forward,
    dman_attention,
    gated_memory_update,
    lstm_cell_step,
    load_model,
    mfn_forward,
    save_model,
)
from .training import TrainConfig, TrainHistory, adam_step, early_stop_check, reduce_lr_on_plateau, train

__version__ = "0.1.0"
