"""Majority-vote curation of annotated tasks into training labels.

Three steps per task batch:
  1. drop tasks where NotInDiscipline holds a strict majority of the valid
     non-skip votes, and tasks with no valid non-skip vote at all;
  2. keep the machine label when strictly more experts agreed than disagreed,
     otherwise adopt the plurality of the suggested replacement categories;
  3. break plurality ties uniformly at random with the seeded generator.

Every count the protocol touches is surfaced in the CurationReport.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .annotation_data import Annotation, TaskRecord, Taxonomy, Verdict
from .errors import SaineError


@dataclass(frozen=True)
class CuratedInstance:
    task_id: str
    abstract: str
    final_category: str
    provenance: str  # "preserved" | "majority_override" | "tie_random"


@dataclass
class CurationReport:
    total: int = 0
    removed_not_in_discipline: int = 0
    removed_invalid: int = 0
    valid: int = 0
    preserved: int = 0
    renewed: int = 0
    tie_broken: int = 0
    final: int = 0
    seed: int = 0

    def check(self) -> None:
        if self.total != (self.removed_not_in_discipline
                          + self.removed_invalid + self.valid):
            raise SaineError("curation report: removal counts do not add up")
        if self.valid != self.preserved + self.renewed:
            raise SaineError("curation report: preserved + renewed != valid")
        if self.tie_broken > self.renewed or self.final > self.valid:
            raise SaineError("curation report: inconsistent tie/final counts")


def curate(tasks: Sequence[TaskRecord], annotations: Sequence[Annotation],
           seed: int, taxonomy: Taxonomy | None = None,
           ) -> tuple[list[CuratedInstance], CurationReport]:
    """Run the curation protocol; deterministic for a fixed seed.

    Tasks are processed in ascending task_id order so the tie-break draws are
    reproducible. When a taxonomy is supplied, every final category must
    resolve in it.
    """
    if seed is None:
        raise SaineError("curation requires an explicit seed")
    by_task: dict[str, list[Annotation]] = {}
    for ann in annotations:
        by_task.setdefault(ann.task_id, []).append(ann)

    rng = random.Random(seed)
    report = CurationReport(total=len(tasks), seed=seed)
    curated: list[CuratedInstance] = []

    for task in sorted(tasks, key=lambda t: t.task_id):
        votes = [a for a in by_task.get(task.task_id, [])
                 if a.verdict is not Verdict.SKIP and a.is_valid]
        if not votes:
            report.removed_invalid += 1
            continue
        n_not_in_discipline = sum(
            1 for a in votes if a.verdict is Verdict.NOT_IN_DISCIPLINE)
        if 2 * n_not_in_discipline > len(votes):
            report.removed_not_in_discipline += 1
            continue

        n_agree = sum(1 for a in votes if a.verdict is Verdict.AGREE)
        suggestions = [a.suggested_category for a in votes
                       if a.verdict is Verdict.DISAGREE]
        if n_agree > len(suggestions):
            final = task.predicted_categories[0]
            provenance = "preserved"
            report.preserved += 1
        else:
            counts = Counter(suggestions)
            top = max(counts.values())
            tied = sorted(c for c, n in counts.items() if n == top)
            if len(tied) > 1:
                final = rng.choice(tied)
                provenance = "tie_random"
                report.tie_broken += 1
            else:
                final = tied[0]
                provenance = "majority_override"
            report.renewed += 1
        if taxonomy is not None and final not in taxonomy:
            raise SaineError(
                f"curated category {final!r} missing from taxonomy "
                f"(task {task.task_id})")
        curated.append(CuratedInstance(
            task_id=task.task_id, abstract=task.abstract,
            final_category=final, provenance=provenance))

    report.valid = report.preserved + report.renewed
    report.final = len(curated)
    report.check()
    return curated, report


def write_curation_outputs(curated: Sequence[CuratedInstance],
                           report: CurationReport, out_dir: str | Path,
                           ) -> tuple[Path, Path]:
    """Write curated.jsonl and report.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curated_path = out / "curated.jsonl"
    with open(curated_path, "w", encoding="utf-8") as f:
        for inst in curated:
            f.write(json.dumps(asdict(inst)) + "\n")
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8") as f:
        json.dump(asdict(report), f, indent=2)
        f.write("\n")
    return curated_path, report_path


def load_curated(path: str | Path) -> list[CuratedInstance]:
    instances = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            instances.append(CuratedInstance(
                task_id=str(row["task_id"]), abstract=row["abstract"],
                final_category=str(row["final_category"]),
                provenance=row.get("provenance", "preserved")))
    return instances
