"""Metaphor detection benchmark toolkit.

Three task formulations over one from-scratch transformer encoder
(word-level masked-pair classification, sentence classification, and
per-token sequence labeling), stratified cross-validation with F1
reporting, attention-based inspection of trained models, and a
human-in-the-loop re-annotation workflow with an HTTP voting service.
"""

from .data import (
    Dataset,
    DatasetFormat,
    FoldAssignment,
    Label,
    LoaderError,
    Record,
    Scheme,
    filter_uncertain,
    load_dataset,
    make_folds,
    save_dataset,
    to_sequence_labels,
)
from .encoder import (
    EncoderConfig,
    EncoderModel,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .metrics import (
    ConfusionMatrix,
    CVReport,
    confusion,
    cross_validate,
    f1,
    f1_binary,
    f1_macro,
    group_by_aspect,
)
from .tasks import TaskKind, TaskSetting, encode_for_task, predict
from .tokenization import Vocab, build_vocab, encode_pair, encode_single, tokenize
from .training import AdamW, TrainConfig, TrainReport, cross_entropy, fit, grad_check

__version__ = "1.0.0"

__all__ = [
    "AdamW",
    "ConfusionMatrix",
    "CVReport",
    "Dataset",
    "DatasetFormat",
    "EncoderConfig",
    "EncoderModel",
    "FoldAssignment",
    "Label",
    "LoaderError",
    "Record",
    "Scheme",
    "TaskKind",
    "TaskSetting",
    "TrainConfig",
    "TrainReport",
    "Vocab",
    "build_vocab",
    "confusion",
    "cross_entropy",
    "cross_validate",
    "encode_for_task",
    "encode_pair",
    "encode_single",
    "f1",
    "f1_binary",
    "f1_macro",
    "filter_uncertain",
    "fit",
    "forward",
    "grad_check",
    "group_by_aspect",
    "init_model",
    "load_checkpoint",
    "load_dataset",
    "make_folds",
    "predict",
    "save_checkpoint",
    "save_dataset",
    "to_sequence_labels",
    "tokenize",
    "__version__",
]
