"""Pairwise inter-annotator agreement over effective labels.

Per-pair per-task agreement is binary (exact label match); a pair's score is
the mean over the tasks both annotated with valid, non-skip verdicts. Keyword
edits never enter the computation.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .annotation_data import (
    Annotation,
    EffectiveLabel,
    TaskRecord,
    Verdict,
    effective_label,
)
from .errors import SaineError


@dataclass(frozen=True)
class PairAgreement:
    annotator_a: str
    annotator_b: str
    score: float | None  # None when the pair shares no scoreable task
    overlap: int


@dataclass
class TaskAgreement:
    task_id: str
    score: float | None
    pair_count: int


@dataclass
class AgreementMatrix:
    annotator_ids: list[str]
    scores: dict[tuple[str, str], float] = field(default_factory=dict)
    overlaps: dict[tuple[str, str], int] = field(default_factory=dict)

    @staticmethod
    def _key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def score(self, a: str, b: str) -> float | None:
        return self.scores.get(self._key(a, b))

    def overlap(self, a: str, b: str) -> int:
        return self.overlaps.get(self._key(a, b), 0)

    def percent(self, a: str, b: str) -> int | None:
        """Score rendered to the nearest whole percent."""
        score = self.score(a, b)
        if score is None:
            return None
        return int(score * 100 + 0.5)


def _label_index(tasks: Iterable[TaskRecord],
                 annotations: Iterable[Annotation],
                 ) -> dict[str, dict[str, EffectiveLabel]]:
    """annotator -> task -> effective label, for valid non-skip annotations."""
    task_map = {t.task_id: t for t in tasks}
    index: dict[str, dict[str, EffectiveLabel]] = {}
    for ann in annotations:
        if ann.verdict is Verdict.SKIP or not ann.is_valid:
            continue
        task = task_map.get(ann.task_id)
        if task is None:
            raise SaineError(f"annotation references unknown task {ann.task_id}")
        index.setdefault(ann.annotator_id, {})[ann.task_id] = (
            effective_label(task, ann))
    return index


def pair_agreement(a: str, b: str, tasks: Sequence[TaskRecord],
                   annotations: Sequence[Annotation]) -> PairAgreement:
    """Agreement of one annotator pair over their shared tasks."""
    annotators = {ann.annotator_id for ann in annotations}
    for annotator in (a, b):
        if annotator not in annotators:
            raise SaineError(f"annotator {annotator!r} has no annotations")
    index = _label_index(tasks, annotations)
    labels_a = index.get(a, {})
    labels_b = index.get(b, {})
    shared = sorted(set(labels_a) & set(labels_b))
    if not shared:
        return PairAgreement(a, b, score=None, overlap=0)
    matches = sum(1 for t in shared if labels_a[t] == labels_b[t])
    return PairAgreement(a, b, score=matches / len(shared), overlap=len(shared))


def agreement_matrix(tasks: Sequence[TaskRecord],
                     annotations: Sequence[Annotation]) -> AgreementMatrix:
    """Symmetric agreement matrix over every annotator pair."""
    annotator_ids = sorted({ann.annotator_id for ann in annotations})
    if len(annotator_ids) < 2:
        raise SaineError("agreement matrix needs at least 2 annotators")
    matrix = AgreementMatrix(annotator_ids=annotator_ids)
    index = _label_index(tasks, annotations)
    for i, a in enumerate(annotator_ids):
        for b in annotator_ids[i + 1:]:
            labels_a = index.get(a, {})
            labels_b = index.get(b, {})
            shared = set(labels_a) & set(labels_b)
            key = AgreementMatrix._key(a, b)
            matrix.overlaps[key] = len(shared)
            if shared:
                matches = sum(1 for t in shared if labels_a[t] == labels_b[t])
                matrix.scores[key] = matches / len(shared)
    return matrix


def task_agreement(task: TaskRecord,
                   annotations: Sequence[Annotation]) -> TaskAgreement:
    """Mean 0/1 agreement over all unordered pairs of one task's annotations."""
    labels = []
    for ann in annotations:
        if ann.task_id != task.task_id:
            continue
        if ann.verdict is Verdict.SKIP or not ann.is_valid:
            continue
        labels.append(effective_label(task, ann))
    n = len(labels)
    pair_count = n * (n - 1) // 2
    if pair_count == 0:
        return TaskAgreement(task_id=task.task_id, score=None, pair_count=0)
    matches = sum(
        1
        for i in range(n)
        for j in range(i + 1, n)
        if labels[i] == labels[j]
    )
    return TaskAgreement(task_id=task.task_id, score=matches / pair_count,
                         pair_count=pair_count)


def matrix_to_csv(matrix: AgreementMatrix) -> str:
    """Rows/columns are annotator ids; cells are whole percents or empty."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([""] + matrix.annotator_ids)
    for a in matrix.annotator_ids:
        row = [a]
        for b in matrix.annotator_ids:
            if a == b:
                row.append("")
                continue
            percent = matrix.percent(a, b)
            row.append("" if percent is None else f"{percent}%")
        writer.writerow(row)
    return buf.getvalue()


def matrix_to_json(matrix: AgreementMatrix) -> str:
    pairs = []
    for i, a in enumerate(matrix.annotator_ids):
        for b in matrix.annotator_ids[i + 1:]:
            pairs.append({
                "a": a,
                "b": b,
                "score": matrix.score(a, b),
                "percent": matrix.percent(a, b),
                "overlap": matrix.overlap(a, b),
            })
    return json.dumps({"annotators": matrix.annotator_ids, "pairs": pairs},
                      indent=2) + "\n"
