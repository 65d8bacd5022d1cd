"""Annotation data model: taxonomy, tasks, annotations, and effective labels.

Parses the JSON annotation export (a fixed subset of the Label Studio export
format) and the hierarchical category taxonomy. Invalid annotations are
flagged here but never dropped; only curation removes data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import ExportParseError, TaxonomyError, UnresolvableAnnotationError

LEVELS = ("discipline", "field", "subfield")


class Verdict(str, Enum):
    AGREE = "agree"
    DISAGREE = "disagree"
    NOT_IN_DISCIPLINE = "not_in_discipline"
    SKIP = "skip"


class SentinelLabel(Enum):
    """Non-category effective labels."""

    NOT_IN_DISCIPLINE = "__not_in_discipline__"
    SKIPPED = "__skipped__"


EffectiveLabel = Union[str, SentinelLabel]


@dataclass(frozen=True)
class CategoryNode:
    id: str
    name: str
    level: str
    parent: str | None = None


@dataclass
class Taxonomy:
    """Validated category hierarchy: disciplines > fields > subfields."""

    nodes: dict[str, CategoryNode]
    name: str = ""

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> CategoryNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TaxonomyError(f"unknown category id: {node_id}") from None

    def children(self, node_id: str) -> list[CategoryNode]:
        return [n for n in self.nodes.values() if n.parent == node_id]

    def path_to_root(self, node_id: str) -> list[CategoryNode]:
        """Walk parent links up to a discipline; raises on a cycle."""
        path = []
        seen = set()
        current: str | None = node_id
        while current is not None:
            if current in seen:
                raise TaxonomyError(f"cycle detected at id: {current}")
            seen.add(current)
            node = self.node(current)
            path.append(node)
            current = node.parent
        return path

    def at_level(self, level: str) -> list[CategoryNode]:
        return [n for n in self.nodes.values() if n.level == level]


def load_taxonomy(path: str | Path, name: str = "") -> Taxonomy:
    """Load a taxonomy from a JSON array of {id, name, level, parent} rows.

    Rejects the whole file on a duplicate id, a dangling parent, a parent at
    the wrong level, or a cycle, naming the offending id.
    """
    with open(path, encoding="utf-8") as f:
        rows = json.load(f)
    return taxonomy_from_rows(rows, name=name or Path(path).stem)


def taxonomy_from_rows(rows: Iterable[dict], name: str = "") -> Taxonomy:
    nodes: dict[str, CategoryNode] = {}
    for row in rows:
        node_id = str(row["id"])
        level = row["level"]
        if level not in LEVELS:
            raise TaxonomyError(f"unknown level {level!r} for id: {node_id}")
        if node_id in nodes:
            raise TaxonomyError(f"duplicate id: {node_id}")
        parent = row.get("parent")
        nodes[node_id] = CategoryNode(
            id=node_id,
            name=row["name"],
            level=level,
            parent=str(parent) if parent is not None else None,
        )

    for node in nodes.values():
        if node.level == "discipline":
            if node.parent is not None:
                raise TaxonomyError(f"discipline must have no parent, id: {node.id}")
            continue
        if node.parent is None:
            raise TaxonomyError(f"missing parent for non-discipline id: {node.id}")
        if node.parent not in nodes:
            raise TaxonomyError(f"dangling parent {node.parent!r} for id: {node.id}")
        expected = LEVELS[LEVELS.index(node.level) - 1]
        actual = nodes[node.parent].level
        if actual != expected:
            raise TaxonomyError(
                f"parent of {node.id} must be a {expected}, got {actual}"
            )

    taxonomy = Taxonomy(nodes=nodes, name=name)
    for node_id in nodes:
        taxonomy.path_to_root(node_id)
    return taxonomy


@dataclass(frozen=True)
class KeywordSpan:
    """A keyword marked inside the abstract; text must equal the substring."""

    start: int
    end: int
    text: str


@dataclass
class TaskRecord:
    task_id: str
    abstract: str
    mag_keywords: list[str] = field(default_factory=list)
    predicted_categories: list[str] = field(default_factory=list)
    discipline: str = ""

    def __post_init__(self):
        if not self.abstract:
            raise ExportParseError("empty abstract", task_id=self.task_id)
        if not 1 <= len(self.predicted_categories) <= 3:
            raise ExportParseError(
                f"predicted_categories must have 1-3 entries, "
                f"got {len(self.predicted_categories)}",
                task_id=self.task_id,
            )


@dataclass
class Annotation:
    annotator_id: str
    task_id: str
    verdict: Verdict
    suggested_category: str | None = None
    removed_keywords: list[str] = field(default_factory=list)
    added_keywords: list[KeywordSpan] = field(default_factory=list)
    duration_seconds: float = 0.0

    @property
    def is_valid(self) -> bool:
        """A Disagree with no replacement category is retained but invalid."""
        if self.verdict is Verdict.DISAGREE:
            return self.suggested_category is not None
        return True


@dataclass
class MultiLabelAnnotation:
    """Per-category verdicts for the multi-label annotation setting."""

    annotator_id: str
    task_id: str
    in_discipline: bool
    per_category_verdicts: list[Verdict] = field(default_factory=list)
    additional_categories: set[str] = field(default_factory=set)

    def validate_for(self, task: TaskRecord) -> None:
        if self.task_id != task.task_id:
            raise ExportParseError("task id mismatch", task_id=task.task_id,
                                   annotator_id=self.annotator_id)
        if self.in_discipline:
            if len(self.per_category_verdicts) != len(task.predicted_categories):
                raise ExportParseError(
                    "per-category verdicts must align with predicted categories",
                    task_id=task.task_id, annotator_id=self.annotator_id)
        elif self.per_category_verdicts:
            raise ExportParseError(
                "per-category verdicts must be empty when out of discipline",
                task_id=task.task_id, annotator_id=self.annotator_id)


@dataclass(frozen=True)
class ValidityFlag:
    """A parse-time observation about an invalid annotation or task."""

    scope: str  # "annotation" | "task"
    task_id: str
    annotator_id: str | None
    reason: str


@dataclass
class ParsedExport:
    tasks: list[TaskRecord]
    annotations: list[Annotation]
    flags: list[ValidityFlag]


def _parse_verdict(raw, task_id: str, annotator_id: str) -> Verdict:
    try:
        return Verdict(raw)
    except ValueError:
        raise ExportParseError(f"unknown verdict {raw!r}", task_id=task_id,
                               annotator_id=annotator_id) from None


def parse_export(document: Sequence[dict] | str | Path) -> ParsedExport:
    """Parse an annotation export into tasks, annotations, and validity flags.

    `document` may be an already-decoded JSON array or a path to one.
    Unknown fields are ignored. Invalid annotations (a Disagree without a
    suggested category) and tasks with zero non-skip annotations are flagged,
    not dropped.
    """
    if isinstance(document, (str, Path)):
        with open(document, encoding="utf-8") as f:
            document = json.load(f)
    if not isinstance(document, list):
        raise ExportParseError("export must be a JSON array of task objects")

    tasks: list[TaskRecord] = []
    annotations: list[Annotation] = []
    flags: list[ValidityFlag] = []

    for item in document:
        if not isinstance(item, dict) or "data" not in item:
            raise ExportParseError("task object must carry a 'data' section")
        task_id = str(item.get("id", ""))
        data = item["data"]
        task = TaskRecord(
            task_id=task_id,
            abstract=data.get("abstract", ""),
            mag_keywords=list(data.get("mag_keywords", [])),
            predicted_categories=[str(c) for c in data.get("predicted_categories", [])],
            discipline=str(data.get("discipline", "")),
        )
        tasks.append(task)

        non_skip = 0
        for raw in item.get("annotations", []):
            annotator_id = str(raw.get("annotator", ""))
            verdict = _parse_verdict(raw.get("verdict"), task_id, annotator_id)
            suggested = raw.get("suggested_category")
            # The suggestion slot is only meaningful on a Disagree; stray
            # values on other verdicts are dropped, not fatal.
            if verdict is not Verdict.DISAGREE:
                suggested = None
            spans = []
            for span in raw.get("added_keywords", []):
                start, end = int(span["start"]), int(span["end"])
                text = span["text"]
                if not 0 <= start < end <= len(task.abstract):
                    raise ExportParseError(
                        f"span [{start},{end}) out of bounds for abstract of "
                        f"length {len(task.abstract)}",
                        task_id=task_id, annotator_id=annotator_id)
                if task.abstract[start:end] != text:
                    raise ExportParseError(
                        f"span text {text!r} does not match the abstract",
                        task_id=task_id, annotator_id=annotator_id)
                spans.append(KeywordSpan(start=start, end=end, text=text))
            removed = [k for k in raw.get("removed_keywords", [])]
            unknown_removed = [k for k in removed if k not in task.mag_keywords]
            if unknown_removed:
                raise ExportParseError(
                    f"removed keywords not in task keywords: {unknown_removed}",
                    task_id=task_id, annotator_id=annotator_id)
            annotation = Annotation(
                annotator_id=annotator_id,
                task_id=task_id,
                verdict=verdict,
                suggested_category=str(suggested) if suggested is not None else None,
                removed_keywords=removed,
                added_keywords=spans,
                duration_seconds=float(raw.get("lead_time", 0.0)),
            )
            annotations.append(annotation)
            if not annotation.is_valid:
                flags.append(ValidityFlag(
                    scope="annotation", task_id=task_id,
                    annotator_id=annotator_id,
                    reason="disagree_without_suggestion"))
            if verdict is not Verdict.SKIP:
                non_skip += 1
        if non_skip == 0:
            flags.append(ValidityFlag(
                scope="task", task_id=task_id, annotator_id=None,
                reason="no_non_skip_annotations"))

    return ParsedExport(tasks=tasks, annotations=annotations, flags=flags)


def serialize_export(tasks: Sequence[TaskRecord],
                     annotations: Sequence[Annotation]) -> list[dict]:
    """Inverse of parse_export; preserves list order."""
    by_task: dict[str, list[Annotation]] = {}
    for ann in annotations:
        by_task.setdefault(ann.task_id, []).append(ann)
    out = []
    for task in tasks:
        out.append({
            "id": task.task_id,
            "data": {
                "abstract": task.abstract,
                "mag_keywords": list(task.mag_keywords),
                "predicted_categories": list(task.predicted_categories),
                "discipline": task.discipline,
            },
            "annotations": [
                {
                    "annotator": ann.annotator_id,
                    "verdict": ann.verdict.value,
                    "suggested_category": ann.suggested_category,
                    "removed_keywords": list(ann.removed_keywords),
                    "added_keywords": [
                        {"start": s.start, "end": s.end, "text": s.text}
                        for s in ann.added_keywords
                    ],
                    "lead_time": ann.duration_seconds,
                }
                for ann in by_task.get(task.task_id, [])
            ],
        })
    return out


def effective_label(task: TaskRecord, annotation: Annotation) -> EffectiveLabel:
    """The single category (or sentinel) that one annotation resolves to.

    Agree binds to the task's first predicted category; Disagree to the
    suggested one. An invalid Disagree has no effective label.
    """
    if annotation.task_id != task.task_id:
        raise ValueError(
            f"annotation for task {annotation.task_id} applied to {task.task_id}")
    if annotation.verdict is Verdict.AGREE:
        return task.predicted_categories[0]
    if annotation.verdict is Verdict.DISAGREE:
        if annotation.suggested_category is None:
            raise UnresolvableAnnotationError(
                f"disagree without suggestion (task={task.task_id}, "
                f"annotator={annotation.annotator_id})")
        return annotation.suggested_category
    if annotation.verdict is Verdict.NOT_IN_DISCIPLINE:
        return SentinelLabel.NOT_IN_DISCIPLINE
    return SentinelLabel.SKIPPED


def validate_tasks_against_taxonomy(tasks: Iterable[TaskRecord],
                                    taxonomy: Taxonomy) -> None:
    for task in tasks:
        for cat in task.predicted_categories:
            if cat not in taxonomy:
                raise ExportParseError(
                    f"predicted category {cat!r} not in taxonomy "
                    f"{taxonomy.name!r}", task_id=task.task_id)
