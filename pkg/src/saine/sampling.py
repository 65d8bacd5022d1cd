"""Stratified sampling of labeled corpora into annotation and test sets."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .annotation_data import TaskRecord
from .errors import SaineError


@dataclass
class CorpusItem:
    id: str
    abstract: str
    labels: list[str]
    keywords: list[str] = field(default_factory=list)
    discipline: str = ""

    @property
    def stratum(self) -> str:
        if not self.labels:
            raise SaineError(f"corpus item {self.id} carries no label")
        return self.labels[0]


@dataclass
class SamplingConfig:
    ratio: float = 2e-5
    per_class_minimum: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise SaineError(f"ratio must be in (0, 1], got {self.ratio}")
        if self.per_class_minimum < 0:
            raise SaineError("per_class_minimum must be >= 0")


def load_corpus_jsonl(path: str | Path) -> list[CorpusItem]:
    items = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            items.append(CorpusItem(
                id=str(row["id"]),
                abstract=row["abstract"],
                labels=[str(label) for label in row["labels"]],
                keywords=list(row.get("keywords", [])),
                discipline=str(row.get("discipline", "")),
            ))
    return items


def write_corpus_jsonl(items: Sequence[CorpusItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for item in items:
            row = {"id": item.id, "abstract": item.abstract,
                   "labels": item.labels}
            if item.keywords:
                row["keywords"] = item.keywords
            if item.discipline:
                row["discipline"] = item.discipline
            f.write(json.dumps(row) + "\n")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _by_class(items: Iterable[CorpusItem]) -> dict[str, list[CorpusItem]]:
    groups: dict[str, list[CorpusItem]] = {}
    for item in items:
        groups.setdefault(item.stratum, []).append(item)
    return groups


def _to_task(item: CorpusItem) -> TaskRecord:
    return TaskRecord(
        task_id=item.id,
        abstract=item.abstract,
        mag_keywords=list(item.keywords),
        predicted_categories=item.labels[:3],
        discipline=item.discipline,
    )


def stratified_sample(dataset: Sequence[CorpusItem],
                      config: SamplingConfig) -> list[TaskRecord]:
    """Per-class quota sampling without replacement.

    Each class contributes max(per_class_minimum, round(ratio * class_size))
    items, or the whole class when it is smaller than its quota. The output
    is ordered by (class, id) and is deterministic for a fixed seed.
    """
    rng = random.Random(config.seed)
    sampled: list[TaskRecord] = []
    for cls, members in sorted(_by_class(dataset).items()):
        quota = max(config.per_class_minimum,
                    _round_half_up(config.ratio * len(members)))
        members = sorted(members, key=lambda m: m.id)
        if quota >= len(members):
            chosen = members
        else:
            chosen = sorted(rng.sample(members, quota), key=lambda m: m.id)
        sampled.extend(_to_task(m) for m in chosen)
    return sampled


def build_test_set(pool: Sequence[CorpusItem], classes: Sequence[str],
                   per_class: int, seed: int) -> list[CorpusItem]:
    """Exactly per_class items from each named class, uniform and seeded.

    Items keep their full label set so multi-index gold labels survive into
    evaluation; the stratum is the first label.
    """
    rng = random.Random(seed)
    groups = _by_class(pool)
    out: list[CorpusItem] = []
    for cls in sorted(set(classes)):
        members = sorted(groups.get(cls, []), key=lambda m: m.id)
        if len(members) < per_class:
            raise SaineError(
                f"class {cls!r} has only {len(members)} items, "
                f"need {per_class}")
        if per_class == 0:
            continue
        if per_class == len(members):
            chosen = members
        else:
            chosen = sorted(rng.sample(members, per_class), key=lambda m: m.id)
        out.extend(chosen)
    return out
