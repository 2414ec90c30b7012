"""Exception hierarchy for the hybridsearch package."""


class HybridSearchError(Exception):
    """Base class for all package errors."""


class CorpusFormatError(HybridSearchError):
    """A corpus/queries file line could not be parsed."""

    def __init__(self, path, line_no, reason):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


class EmptyCorpusError(HybridSearchError):
    """The corpus file contains no documents."""


class DuplicateIdError(HybridSearchError):
    """An external document id occurred more than once."""

    def __init__(self, external_id):
        self.external_id = external_id
        super().__init__(f"duplicate external id {external_id!r}")


class FileFormatError(HybridSearchError):
    """A binary interchange or index file is malformed (bad magic,
    truncated record, inconsistent dimensions)."""


class EmptyTensorError(FileFormatError):
    """A tensor record declared zero tokens."""

    def __init__(self, ordinal):
        self.ordinal = ordinal
        super().__init__(f"tensor record {ordinal} has n_tokens=0")


class MissingTensorError(HybridSearchError):
    """A candidate ordinal has no tensor in the store."""

    def __init__(self, ordinal):
        self.ordinal = ordinal
        super().__init__(f"no tensor stored for ordinal {ordinal}")


class IndexCorpusMismatchError(HybridSearchError):
    """A loaded index was built from a different corpus than the manifest."""


class NotFittedError(HybridSearchError):
    """Search was attempted on an estimator before fit()."""


class PlanError(HybridSearchError):
    """A query spec cannot be compiled into a plan."""


class PathExecutionError(HybridSearchError):
    """One retrieval path failed during plan execution."""

    def __init__(self, path_tag, cause):
        self.path_tag = path_tag
        self.cause = cause
        super().__init__(f"path {path_tag} failed: {cause!r}")


class ScenarioOutcomeError(HybridSearchError):
    """A scripted benchmark scenario did not reproduce the expected direction."""
