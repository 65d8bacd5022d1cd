"""Versioned on-disk model registry with parent lineage.

Layout: one directory per model name holding v<N>.json artifacts, plus an
index.json listing every entry. Writes go through a file lock and a
write-temp-then-rename step, so concurrent registrations are safe and
readers never observe a torn file.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

from .classifier import LinearTextModel
from .errors import ModelNotFoundError, RegistryError

INDEX_FILE = "index.json"
LOCK_FILE = ".registry.lock"


@dataclass(frozen=True)
class ModelRegistryEntry:
    name: str
    version: int
    path: str
    created_at: str
    architecture_tag: str
    parent: tuple[str, int] | None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "path": self.path,
            "created_at": self.created_at,
            "architecture_tag": self.architecture_tag,
            "parent": list(self.parent) if self.parent else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelRegistryEntry":
        parent = data.get("parent")
        return cls(
            name=data["name"], version=int(data["version"]),
            path=data["path"], created_at=data.get("created_at", ""),
            architecture_tag=data.get("architecture_tag", "Linear"),
            parent=(str(parent[0]), int(parent[1])) if parent else None,
        )


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_model_reference(reference: str) -> tuple[str, int | None]:
    """"name@3" -> ("name", 3); a bare name means the latest version."""
    if "@" in reference:
        name, _, raw = reference.partition("@")
        try:
            return name, int(raw)
        except ValueError:
            raise RegistryError(
                f"bad version in model reference {reference!r}") from None
    return reference, None


class ModelRegistry:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.root / LOCK_FILE))

    def _index_path(self) -> Path:
        return self.root / INDEX_FILE

    def _read_index(self) -> list[ModelRegistryEntry]:
        path = self._index_path()
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        return [ModelRegistryEntry.from_dict(e) for e in data.get("entries", [])]

    def _write_index(self, entries: list[ModelRegistryEntry]) -> None:
        payload = json.dumps(
            {"entries": [e.to_dict() for e in entries]}, indent=2) + "\n"
        _atomic_write(self._index_path(), payload)

    def entries(self, name: str | None = None) -> list[ModelRegistryEntry]:
        entries = self._read_index()
        if name is not None:
            entries = [e for e in entries if e.name == name]
        return sorted(entries, key=lambda e: (e.name, e.version))

    def register_model(self, model: LinearTextModel, name: str,
                       ) -> tuple[str, int]:
        """Persist the model under the next version for `name`.

        A fine-tuned model's parent lineage is taken from its metadata. The
        stored artifact records its own (name, version).
        """
        with self._lock:
            entries = self._read_index()
            versions = [e.version for e in entries if e.name == name]
            version = max(versions, default=0) + 1
            model_dir = self.root / name
            model_dir.mkdir(parents=True, exist_ok=True)
            rel_path = f"{name}/v{version}.json"
            artifact_path = self.root / rel_path

            model.metadata.name = name
            model.metadata.version = version
            parent = model.metadata.parent_model
            if parent is not None:
                if not any(e.name == parent[0] and e.version == parent[1]
                           for e in entries):
                    raise RegistryError(
                        f"parent model {parent[0]}@{parent[1]} is not registered")
            try:
                _atomic_write(artifact_path,
                              json.dumps(model.to_dict()) + "\n")
            except OSError as exc:
                raise RegistryError(
                    f"cannot write artifact {artifact_path}: {exc}") from exc
            entries.append(ModelRegistryEntry(
                name=name, version=version, path=rel_path,
                created_at=datetime.now(timezone.utc).isoformat(),
                architecture_tag=model.metadata.architecture_tag,
                parent=parent))
            self._write_index(entries)
        return name, version

    def resolve(self, reference: str) -> ModelRegistryEntry:
        name, version = parse_model_reference(reference)
        candidates = self.entries(name)
        if not candidates:
            raise ModelNotFoundError(reference)
        if version is None:
            return candidates[-1]
        for entry in candidates:
            if entry.version == version:
                return entry
        raise ModelNotFoundError(reference)

    def load(self, reference: str) -> LinearTextModel:
        entry = self.resolve(reference)
        artifact = self.root / entry.path
        if not artifact.exists():
            raise RegistryError(f"artifact file missing: {artifact}")
        return LinearTextModel.load(artifact)
