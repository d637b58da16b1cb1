"""uapkit: targeted universal adversarial perturbations for image classifiers."""

from .attack import (
    AttackConfig,
    Perturbation,
    TargetedUAP,
    UapRunReport,
    generate_targeted_uap,
    load_perturbation,
    project,
    random_uap,
    save_perturbation,
    tfgsm_step,
)
from .classifier import (
    Network,
    NeuralNetClassifier,
    build_preset,
    classify,
    load_model,
    logits,
    loss_and_input_grad,
    save_model,
    train,
)
from .datasets import (
    LabeledDataset,
    load_cifar10,
    load_dataset,
    save_dataset,
    split_balanced,
    synth_dataset,
    write_cifar10,
)
from .evaluation import (
    EvalReport,
    evaluate,
    success_rate,
    sweep,
    write_csv,
    xi_for_zeta,
    zeta,
)
from .exceptions import DegenerateGradientError, FormatError
from .tensor import axpy, lp_norm, sign

__all__ = [
    "AttackConfig",
    "DegenerateGradientError",
    "EvalReport",
    "FormatError",
    "LabeledDataset",
    "Network",
    "NeuralNetClassifier",
    "Perturbation",
    "TargetedUAP",
    "UapRunReport",
    "axpy",
    "build_preset",
    "classify",
    "evaluate",
    "generate_targeted_uap",
    "load_cifar10",
    "load_dataset",
    "load_model",
    "load_perturbation",
    "logits",
    "loss_and_input_grad",
    "lp_norm",
    "project",
    "random_uap",
    "save_dataset",
    "save_model",
    "save_perturbation",
    "sign",
    "split_balanced",
    "success_rate",
    "sweep",
    "synth_dataset",
    "tfgsm_step",
    "train",
    "write_cifar10",
    "write_csv",
    "xi_for_zeta",
    "zeta",
]
