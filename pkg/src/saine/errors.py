"""Exception hierarchy shared across the package."""


class SaineError(Exception):
    """Base class for all errors raised by this package."""


class TaxonomyError(SaineError):
    """Taxonomy file violates a structural invariant (duplicate id, dangling
    parent, bad parent level, or a cycle)."""


class ExportParseError(SaineError):
    """Annotation export is malformed; carries task/annotator context when known."""

    def __init__(self, message: str, task_id: str | None = None,
                 annotator_id: str | None = None):
        context = []
        if task_id is not None:
            context.append(f"task={task_id}")
        if annotator_id is not None:
            context.append(f"annotator={annotator_id}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
        self.task_id = task_id
        self.annotator_id = annotator_id


class UnresolvableAnnotationError(SaineError):
    """An annotation has no effective label (Disagree without a suggestion)."""


class TrainingError(SaineError):
    """Model training failed (diverged, bad label set, empty corpus)."""


class RegistryError(SaineError):
    """Model registry lookup or persistence failed."""


class ModelNotFoundError(RegistryError):
    """Requested model name/version does not exist in the registry."""

    def __init__(self, reference: str):
        super().__init__(f"model not found: {reference}")
        self.reference = reference


class MatchingError(SaineError):
    """Keyword extraction or profile construction failed."""
