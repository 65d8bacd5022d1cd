"""Linear bag-of-words classifiers over tf-idf features.

Single-label models train with softmax cross-entropy, multi-label models
with independent per-label logistic (binary cross-entropy) losses, both via
full-batch gradient descent with an L2 penalty on the non-bias weights.
Weights start at zero, so training is fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .annotation_data import LEVELS, Taxonomy
from .errors import SaineError, TrainingError
from .textproc import (
    CleaningConfig,
    FeatureVocabulary,
    build_vocabulary,
    featurize,
    featurize_all,
)

SINGLE_LABEL = "single_label"
MULTI_LABEL = "multi_label"
ARCHITECTURE_TAGS = ("CNN", "RNN", "DNN", "Transformer", "Linear")

ARTIFACT_FORMAT_VERSION = 1


@dataclass
class TrainParams:
    learning_rate: float = 0.1
    epochs: int = 300
    l2: float = 1e-4
    seed: int = 0
    max_terms: int = 5000
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)


@dataclass
class ModelMetadata:
    name: str = ""
    version: int | None = None
    architecture_tag: str = "Linear"
    parent_model: tuple[str, int] | None = None
    final_loss: float | None = None
    loss_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "architecture_tag": self.architecture_tag,
            "parent_model": list(self.parent_model) if self.parent_model else None,
            "final_loss": self.final_loss,
            "loss_history": self.loss_history,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelMetadata":
        parent = data.get("parent_model")
        return cls(
            name=data.get("name", ""),
            version=data.get("version"),
            architecture_tag=data.get("architecture_tag", "Linear"),
            parent_model=(str(parent[0]), int(parent[1])) if parent else None,
            final_loss=data.get("final_loss"),
            loss_history=list(data.get("loss_history", [])),
        )


@dataclass
class LinearTextModel:
    level: str
    labels: list[str]
    weights: np.ndarray  # (n_labels, n_terms + 1); last column is the bias
    mode: str
    vocabulary: FeatureVocabulary
    metadata: ModelMetadata = field(default_factory=ModelMetadata)

    def __post_init__(self):
        if self.mode not in (SINGLE_LABEL, MULTI_LABEL):
            raise SaineError(f"unknown mode {self.mode!r}")
        expected = (len(self.labels), len(self.vocabulary) + 1)
        if self.weights.shape != expected:
            raise SaineError(
                f"weight matrix shape {self.weights.shape} != {expected}")
        if not np.isfinite(self.weights).all():
            raise SaineError("weight matrix contains non-finite entries")

    @property
    def identity(self) -> str:
        if self.metadata.version is None:
            return self.metadata.name or "<unregistered>"
        return f"{self.metadata.name}@{self.metadata.version}"

    def to_dict(self) -> dict:
        return {
            "format_version": ARTIFACT_FORMAT_VERSION,
            "level": self.level,
            "labels": list(self.labels),
            "mode": self.mode,
            "weights": self.weights.tolist(),
            "vocabulary": self.vocabulary.to_dict(),
            "metadata": self.metadata.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearTextModel":
        version = data.get("format_version")
        if version != ARTIFACT_FORMAT_VERSION:
            raise SaineError(f"unsupported model artifact version: {version}")
        return cls(
            level=data["level"],
            labels=[str(label) for label in data["labels"]],
            weights=np.array(data["weights"], dtype=float),
            mode=data["mode"],
            vocabulary=FeatureVocabulary.from_dict(data["vocabulary"]),
            metadata=ModelMetadata.from_dict(data.get("metadata", {})),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)
            f.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "LinearTextModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _with_bias(features: np.ndarray) -> np.ndarray:
    ones = np.ones((features.shape[0], 1))
    return np.hstack([features, ones])


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_loss(weights: np.ndarray, features: np.ndarray,
                 targets: np.ndarray, l2: float,
                 ) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy plus (l2/2)*||W||^2 over non-bias weights.

    `features` already carries the bias column; `targets` is one-hot.
    Returns (loss, gradient with the same shape as weights).
    """
    n = features.shape[0]
    logits = features @ weights.T
    log_probs = _log_softmax(logits)
    loss = -float((targets * log_probs).sum()) / n
    reg = weights.copy()
    reg[:, -1] = 0.0
    loss += 0.5 * l2 * float((reg ** 2).sum())
    probs = np.exp(log_probs)
    grad = (probs - targets).T @ features / n + l2 * reg
    return loss, grad


def bce_loss(weights: np.ndarray, features: np.ndarray, targets: np.ndarray,
             l2: float) -> tuple[float, np.ndarray]:
    """Per-label logistic loss summed over labels, averaged over examples,
    plus the same L2 penalty as softmax_loss."""
    n = features.shape[0]
    logits = features @ weights.T
    # softplus(z) - y*z is the stable form of -[y log s + (1-y) log(1-s)]
    loss = float((np.logaddexp(0.0, logits) - targets * logits).sum()) / n
    reg = weights.copy()
    reg[:, -1] = 0.0
    loss += 0.5 * l2 * float((reg ** 2).sum())
    probs = 1.0 / (1.0 + np.exp(-logits))
    grad = (probs - targets).T @ features / n + l2 * reg
    return loss, grad


def _one_hot(item_labels: Sequence[Sequence[str]], labels: Sequence[str],
             mode: str) -> np.ndarray:
    index = {label: i for i, label in enumerate(labels)}
    targets = np.zeros((len(item_labels), len(labels)))
    for row, row_labels in enumerate(item_labels):
        if not row_labels:
            raise TrainingError(f"item {row} carries no label")
        if mode == SINGLE_LABEL and len(row_labels) != 1:
            raise TrainingError(
                f"item {row} has {len(row_labels)} labels in single-label mode")
        for label in row_labels:
            if label not in index:
                raise TrainingError(f"label {label!r} not in the label set")
            targets[row, index[label]] = 1.0
    return targets


def _descend(weights: np.ndarray, features: np.ndarray, targets: np.ndarray,
             params: TrainParams, mode: str) -> tuple[np.ndarray, list[float]]:
    loss_fn = softmax_loss if mode == SINGLE_LABEL else bce_loss
    history = []
    for epoch in range(params.epochs):
        loss, grad = loss_fn(weights, features, targets, params.l2)
        if not np.isfinite(loss):
            raise TrainingError(f"training diverged at epoch {epoch}")
        history.append(loss)
        weights = weights - params.learning_rate * grad
    final, _ = loss_fn(weights, features, targets, params.l2)
    if not np.isfinite(final):
        raise TrainingError(f"training diverged at epoch {params.epochs}")
    history.append(final)
    return weights, history


def train(corpus: Sequence[tuple[str, Sequence[str]]], labels: Sequence[str],
          level: str, mode: str, params: TrainParams | None = None,
          name: str = "", architecture_tag: str = "Linear",
          ) -> LinearTextModel:
    """Train a model from scratch on (text, labels) pairs.

    The vocabulary is built from the training texts only. Weights start at
    zero; with zero epochs the model predicts the uniform distribution.
    """
    params = params or TrainParams()
    if mode == SINGLE_LABEL and len(labels) < 2:
        raise TrainingError("single-label training needs at least 2 labels")
    if mode == MULTI_LABEL and len(labels) < 1:
        raise TrainingError("multi-label training needs at least 1 label")
    if not corpus:
        raise TrainingError("empty training corpus")
    texts = [text for text, _ in corpus]
    vocab = build_vocabulary(texts, params.cleaning, params.max_terms)
    features = _with_bias(featurize_all(texts, vocab))
    targets = _one_hot([row for _, row in corpus], labels, mode)
    weights = np.zeros((len(labels), features.shape[1]))
    weights, history = _descend(weights, features, targets, params, mode)
    metadata = ModelMetadata(name=name, architecture_tag=architecture_tag,
                             final_loss=history[-1], loss_history=history)
    return LinearTextModel(level=level, labels=list(labels), weights=weights,
                           mode=mode, vocabulary=vocab, metadata=metadata)


def fine_tune(base: LinearTextModel,
              curated: Sequence[tuple[str, Sequence[str]]],
              params: TrainParams | None = None) -> LinearTextModel:
    """Continue gradient descent from the base weights on curated data only.

    The base vocabulary is reused unchanged and the base model is not
    modified; the result records the base identity as its parent.
    """
    params = params or TrainParams()
    if not curated:
        raise TrainingError("empty fine-tuning set")
    label_set = set(base.labels)
    for _, row_labels in curated:
        for label in row_labels:
            if label not in label_set:
                raise TrainingError(
                    f"curated label {label!r} outside the base label set")
    texts = [text for text, _ in curated]
    features = _with_bias(featurize_all(texts, base.vocabulary))
    targets = _one_hot([row for _, row in curated], base.labels, base.mode)
    weights, history = _descend(base.weights.copy(), features, targets,
                                params, base.mode)
    if base.metadata.version is None:
        parent = None
    else:
        parent = (base.metadata.name, base.metadata.version)
    metadata = ModelMetadata(
        name=base.metadata.name, architecture_tag=base.metadata.architecture_tag,
        parent_model=parent, final_loss=history[-1], loss_history=history)
    return LinearTextModel(level=base.level, labels=list(base.labels),
                           weights=weights, mode=base.mode,
                           vocabulary=base.vocabulary, metadata=metadata)


def fine_tune_curated(base: LinearTextModel, instances,
                      params: TrainParams | None = None) -> LinearTextModel:
    """fine_tune over CuratedInstance rows (abstract -> final_category)."""
    pairs = [(inst.abstract, [inst.final_category]) for inst in instances]
    return fine_tune(base, pairs, params)


def predict(model: LinearTextModel, text: str) -> list[tuple[str, float]]:
    """Ranked (label, probability) list, descending score, ties by label id."""
    x = np.append(featurize(text, model.vocabulary), 1.0)
    logits = model.weights @ x
    if model.mode == SINGLE_LABEL:
        shifted = logits - logits.max()
        exp = np.exp(shifted)
        probs = exp / exp.sum()
    else:
        probs = 1.0 / (1.0 + np.exp(-logits))
    ranked = sorted(zip(model.labels, probs), key=lambda p: (-p[1], p[0]))
    return [(label, float(p)) for label, p in ranked]


@dataclass
class PredictionResult:
    item_id: str | None
    levels: dict[str, list[tuple[str, float]]]

    def top(self, level: str) -> tuple[str, float] | None:
        ranked = self.levels.get(level)
        return ranked[0] if ranked else None


def predict_hierarchical(models: Mapping[str, LinearTextModel], text: str,
                         taxonomy: Taxonomy, item_id: str | None = None,
                         ) -> PredictionResult:
    """Chain per-level predictions, conditioning each level on the previous
    top-1 category.

    The first provided level predicts freely; each deeper level is restricted
    to the taxonomy children of the level above and, in single-label mode,
    renormalized over them. A level with no surviving candidates ends the
    chain.
    """
    ordered = [level for level in LEVELS if level in models]
    if not ordered:
        raise SaineError("no models supplied")
    for level in ordered:
        for label in models[level].labels:
            if label not in taxonomy or taxonomy.node(label).level != level:
                raise SaineError(
                    f"model label {label!r} is not a {level} in taxonomy "
                    f"{taxonomy.name!r}")

    levels: dict[str, list[tuple[str, float]]] = {}
    parent: str | None = None
    for depth, level in enumerate(ordered):
        model = models[level]
        ranked = predict(model, text)
        if depth > 0:
            children = {c.id for c in taxonomy.children(parent)}
            ranked = [(lbl, p) for lbl, p in ranked if lbl in children]
            if not ranked:
                break
            if model.mode == SINGLE_LABEL:
                total = sum(p for _, p in ranked)
                ranked = [(lbl, p / total) for lbl, p in ranked]
        levels[level] = ranked
        parent = ranked[0][0]
    return PredictionResult(item_id=item_id, levels=levels)


@dataclass
class EvalComparison:
    correct_base: int
    correct_ft: int
    delta: int
    identical: int
    total: int
    model_type: str

    def __post_init__(self):
        if self.delta != self.correct_ft - self.correct_base:
            raise SaineError("delta must equal correct_ft - correct_base")
        if (self.identical > self.total or self.correct_base > self.total
                or self.correct_ft > self.total):
            raise SaineError("evaluation counts exceed the item total")

    def csv_row(self) -> str:
        header = "correct_base,correct_ft,delta,identical,total,model_type"
        row = (f"{self.correct_base},{self.correct_ft},{self.delta},"
               f"{self.identical},{self.total},{self.model_type}")
        return f"{header}\n{row}\n"


def compare_predictions(base_top1: Sequence[str], ft_top1: Sequence[str],
                        gold_sets: Sequence[Sequence[str]],
                        model_type: str) -> EvalComparison:
    """Count top-1 correctness against multi-index gold labels.

    A prediction is correct when the item's gold index set contains it.
    """
    if not gold_sets:
        raise SaineError("empty test set")
    if not (len(base_top1) == len(ft_top1) == len(gold_sets)):
        raise SaineError("prediction/gold lists are misaligned")
    correct_base = correct_ft = identical = 0
    for bp, fp, gold in zip(base_top1, ft_top1, gold_sets):
        if not gold:
            raise SaineError("every test item needs at least one gold index")
        gold = set(gold)
        if bp in gold:
            correct_base += 1
        if fp in gold:
            correct_ft += 1
        if bp == fp:
            identical += 1
    return EvalComparison(
        correct_base=correct_base, correct_ft=correct_ft,
        delta=correct_ft - correct_base, identical=identical,
        total=len(gold_sets), model_type=model_type)


def evaluate_pair(base: LinearTextModel, ft: LinearTextModel,
                  testset: Sequence, model_type: str | None = None,
                  ) -> EvalComparison:
    """Compare a base model and its fine-tuned counterpart on a test set.

    Test items need `.abstract` and a `.labels` gold index list (corpus
    items qualify).
    """
    if base.labels != ft.labels:
        raise SaineError("base and fine-tuned models must share a label set")
    base_top1 = [predict(base, item.abstract)[0][0] for item in testset]
    ft_top1 = [predict(ft, item.abstract)[0][0] for item in testset]
    gold = [item.labels for item in testset]
    tag = model_type or base.metadata.architecture_tag
    return compare_predictions(base_top1, ft_top1, gold, tag)
