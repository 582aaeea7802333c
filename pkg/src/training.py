"""
Training and evaluation
---------
Weighted cross-entropy, Adam with decoupled weight decay, the epoch loop with
validation-OA early stopping, and batched (optionally threaded) evaluation.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .dataset_io import Dataset, Split, split
from .errors import ConfigurationError, DataError, NumericalError
from .log_config import LOGGER
from .metrics import confusion_matrix, metrics_from_confusion
from .model import GDSMamba
from .nn import Parameter
from .schemas import DatasetManifest, HistoryRecord, MetricsReport, ModelConfig, RunConfig, TrainConfig
from .tensor import Tensor, as_tensor, backward, gather, log_softmax, reset_tape, reshape, tensor_sum
from .tokens import MiniBatch


def weighted_cross_entropy(logits: Tensor, targets: Sequence[int], weights: Optional[np.ndarray] = None) -> Tensor:
    """
    sum_i w_{y_i} * -log softmax(logits_i)[y_i] / sum_i w_{y_i}

    Args:
        logits (Tensor): [B, K] raw scores.
        targets: B class indices in [0, K).
        weights (np.ndarray): positive per-class weights; None means all ones.

    Returns:
        Tensor: scalar loss.
    """
    batch, classes = logits.shape
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (batch,):
        raise DataError(f"{targets.size} targets for {batch} logit rows.")
    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise DataError(f"Target index outside [0, {classes}).")
    weights = np.ones(classes) if weights is None else np.asarray(weights, dtype=np.float64)
    if weights.shape != (classes,) or np.any(weights <= 0):
        raise DataError(f"Class weights must be {classes} positive values.")

    picked = reshape(gather(log_softmax(logits, axis=1), targets[:, None], axis=1), (batch,))
    sample_weights = weights[targets]
    weighted = tensor_sum(picked * as_tensor(sample_weights, like=logits))
    return weighted * (-1.0 / float(sample_weights.sum()))


def class_weights(labels: Sequence[int], classes: int, mode: str = "inverse") -> np.ndarray:
    """Inverse class frequency normalized to mean 1 over present classes, or ones"""
    if mode == "uniform":
        return np.ones(classes)
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=classes).astype(np.float64)
    present = counts > 0
    if not present.any():
        raise DataError("Cannot weight classes of an empty split.")
    weights = np.ones(classes)
    weights[present] = 1.0 / counts[present]
    weights[present] /= weights[present].mean()
    return weights


@dataclass
class AdamState:
    """First/second moments and step count of one parameter"""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float = 1e-3,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    coupled: bool = False,
) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameter values"""
    beta1, beta2 = betas
    if coupled and weight_decay:
        grad = grad + weight_decay * param
    state.t += 1
    state.m = beta1 * state.m + (1 - beta1) * grad
    state.v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = state.m / (1 - beta1**state.t)
    v_hat = state.v / (1 - beta2**state.t)
    updated = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    if weight_decay and not coupled:
        updated = updated - lr * weight_decay * param
    return updated


class AdamOptimizer:
    """Adam over named parameters; parameters without a gradient are skipped"""

    def __init__(
        self,
        named_parameters: Iterable[Tuple[str, Parameter]],
        lr: float = 1e-3,
        weight_decay: float = 1e-4,
        coupled: bool = False,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params: Dict[str, Parameter] = dict(named_parameters)
        self.lr = lr
        self.weight_decay = weight_decay
        self.coupled = coupled
        self.betas = betas
        self.eps = eps
        self.state: Dict[str, AdamState] = {
            name: AdamState(np.zeros(param.shape), np.zeros(param.shape)) for name, param in self.params.items()
        }

    def step(self) -> None:
        for name, param in self.params.items():
            if param.grad is None:
                continue
            updated = adam_step(
                param.data.astype(np.float64),
                param.grad.astype(np.float64),
                self.state[name],
                self.lr,
                self.betas,
                self.eps,
                self.weight_decay,
                self.coupled,
            )
            param.assign(updated)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = None


@dataclass
class TrainResult:
    history: List[HistoryRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_oa: float = float("-inf")


def _batches(indices: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [indices[start:start + batch_size] for start in range(0, len(indices), batch_size)]


def predict(
    model: GDSMamba,
    cubes: np.ndarray,
    indices: Optional[np.ndarray] = None,
    batch_size: int = 64,
    threads: int = 1,
) -> np.ndarray:
    """Arg-max class for each selected cube, in index order"""
    indices = np.arange(len(cubes)) if indices is None else np.asarray(indices)
    chunks = _batches(indices, batch_size)
    model.eval()

    def _predict(chunk):
        return model.predict(MiniBatch(cubes[chunk]))

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_predict, chunks))
    else:
        parts = [_predict(chunk) for chunk in chunks]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def evaluate(
    model: GDSMamba,
    cubes: np.ndarray,
    labels: np.ndarray,
    indices: np.ndarray,
    batch_size: int = 64,
    threads: int = 1,
    class_names: Optional[Sequence[str]] = None,
) -> MetricsReport:
    """Metrics of the model on `indices`; independent of the thread count"""
    indices = np.asarray(indices)
    if len(indices) == 0:
        raise DataError("Cannot evaluate an empty split.")
    predicted = predict(model, cubes, indices, batch_size, threads)
    matrix = confusion_matrix(np.asarray(labels)[indices], predicted, model.config.K)
    return metrics_from_confusion(matrix, class_names)


def _train_epoch(model, optimizer, cubes, labels, order, weights, batch_size, epoch) -> float:
    total, seen = 0.0, 0
    for chunk in _batches(order, batch_size):
        if len(chunk) < 2:
            LOGGER.info("Epoch %s: skipping a trailing batch of one sample.", epoch)
            continue
        reset_tape()
        optimizer.zero_grad()
        try:
            logits = model(MiniBatch(cubes[chunk], labels[chunk]), training=True)
            loss = weighted_cross_entropy(logits, labels[chunk], weights)
            backward(loss)
            optimizer.step()
        except NumericalError as numerical_error:
            raise NumericalError(f"Training diverged in epoch {epoch}: {numerical_error}", epoch) from numerical_error
        total += loss.item() * len(chunk)
        seen += len(chunk)
    reset_tape()
    return total / max(seen, 1)


def train(
    model: GDSMamba,
    cubes: np.ndarray,
    labels: np.ndarray,
    split: Split,
    config: TrainConfig,
    history_path: Optional[Path] = None,
    threads: int = 1,
) -> TrainResult:
    """
    Seeded mini-batch training with early stopping on validation OA.

    The model ends up holding the parameters of the best validation epoch
    (ties keep the earlier epoch). With `history_path` every epoch appends one
    JSON line. With lr = 0 the whole model state stays at its initial value.
    """
    if len(split.train) == 0 or len(split.val) == 0:
        raise DataError("Training needs non-empty train and validation splits.")
    labels = np.asarray(labels, dtype=np.int64)
    model.fit_standardizer(cubes[split.train])
    weights = class_weights(labels[split.train], model.config.K, config.class_weights)
    optimizer = AdamOptimizer(
        model.named_parameters(), config.lr, config.weight_decay, config.coupled_weight_decay
    )
    rng = np.random.default_rng(config.seed)
    result = TrainResult()
    best_state = initial_state = model.state_dict()
    stale = 0
    if history_path is not None:
        Path(history_path).write_text("")

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(split.train)
        train_loss = _train_epoch(model, optimizer, cubes, labels, order, weights, config.batch_size, epoch)
        if config.lr == 0.0:
            # a zero learning rate freezes batch-norm running statistics too
            model.load_state_dict(initial_state)
        try:
            report = evaluate(model, cubes, labels, split.val, config.batch_size, threads)
        except NumericalError as numerical_error:
            raise NumericalError(f"Validation diverged after epoch {epoch}: {numerical_error}", epoch) from numerical_error
        improved = report.oa > result.best_val_oa
        if improved:
            result.best_val_oa, result.best_epoch = report.oa, epoch
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
        record = HistoryRecord(epoch=epoch, train_loss=train_loss, val_oa=report.oa, best=improved)
        result.history.append(record)
        if history_path is not None:
            with open(history_path, "a", encoding="utf-8") as history_file:
                history_file.write(record.json() + "\n")
        LOGGER.info("Epoch %s: train loss %.6f, val OA %.2f%s", epoch, train_loss, report.oa, " (best)" if improved else "")
        if stale >= config.patience:
            LOGGER.info("Early stopping after epoch %s; best epoch %s.", epoch, result.best_epoch)
            break

    model.load_state_dict(best_state)
    return result


def model_config_for(config: ModelConfig, manifest: DatasetManifest) -> ModelConfig:
    """Config with the data dimensions (H, W, T, C0, K) taken from a dataset manifest"""
    dims = {"H": manifest.H, "W": manifest.W, "T": manifest.T, "C0": manifest.C0, "K": manifest.K}
    if all(getattr(config, name) == value for name, value in dims.items()):
        return config
    LOGGER.info("Model dimensions set from the dataset: %s", dims)
    try:
        return ModelConfig(**{**config.dict(), **dims})
    except ValidationError as validation_error:
        raise ConfigurationError(f"Model config does not fit the dataset: {validation_error}") from validation_error


def fit_dataset(
    run_config: RunConfig,
    dataset: Dataset,
    variant: str = "full",
    history_path: Optional[Path] = None,
) -> Tuple[GDSMamba, TrainResult, Split]:
    """
    Split the dataset with the data recipe, build the variant's model and train it.

    Args:
        run_config (RunConfig): model, train and split settings.
        dataset (Dataset): samples to split.
        variant (str): ablation variant applied to the model config.
        history_path (Path): optional JSONL history file.

    Returns:
        (model, TrainResult, Split): the model holds its best validation state.
    """
    data = run_config.data
    indices = split(dataset.labels, data.train_n, data.val_n, data.seed)
    model_config = model_config_for(run_config.model, dataset.manifest).with_variant(variant)
    model = GDSMamba(model_config)
    result = train(
        model, dataset.cubes, dataset.labels, indices, run_config.train, history_path, run_config.threads
    )
    return model, result, indices
