"""Exception hierarchy shared by all promptpipe modules.

Every error raised by the library derives from :class:`PromptPipeError`,
so callers (and the CLI) can catch one base class. Parsing and loading
functions are total: bad input raises one of these, never a bare
``IndexError``/``KeyError`` from the internals.
"""

from __future__ import annotations


class PromptPipeError(Exception):
    """Base class for all promptpipe errors."""


# --- template language ---


class TemplateError(PromptPipeError):
    """Base class for template parsing and validation errors."""


class UnbalancedBrace(TemplateError):
    pass


class UnknownAttributeKey(TemplateError):
    pass


class ConflictingAttributes(TemplateError):
    pass


class InvalidValueType(TemplateError):
    pass


class ConflictingSoftIdInitialization(TemplateError):
    pass


class EmptyTemplate(TemplateError):
    pass


# --- wrapping ---


class MissingMetaKey(PromptPipeError):
    def __init__(self, key: str):
        super().__init__(f"example has no meta value for key {key!r}")
        self.key = key


# --- vocabulary / tokenization ---


class VocabError(PromptPipeError):
    pass


class MissingSpecialToken(VocabError):
    pass


class DuplicateToken(VocabError):
    pass


class TemplateTooLong(PromptPipeError):
    pass


# --- verbalizer ---


class VerbalizerError(PromptPipeError):
    pass


class EmptyClass(VerbalizerError):
    pass


class DuplicateClass(VerbalizerError):
    pass


class UnreadableFile(VerbalizerError):
    pass


class DimensionMismatch(PromptPipeError):
    pass


# --- data ---


class DataError(PromptPipeError):
    pass


class MalformedLine(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicateGuid(DataError):
    pass


class InsufficientExamples(DataError):
    def __init__(self, label: str, have: int, need: int):
        super().__init__(
            f"class {label!r} has {have} labeled example(s), need {need}"
        )
        self.label = label
        self.have = have
        self.need = need


# --- pipeline runner ---


class ConfigError(PromptPipeError):
    pass


class ClassListMismatch(PromptPipeError):
    pass


class GuidMismatch(PromptPipeError):
    pass


class MissingLogits(PromptPipeError):
    def __init__(self, guid: str):
        super().__init__(f"logits file has no entry for guid {guid!r}")
        self.guid = guid


class PipelineStageError(PromptPipeError):
    """Wraps a failure inside the pipeline with the guid and stage name."""

    def __init__(self, guid: str, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed for guid {guid!r}: {cause}")
        self.guid = guid
        self.stage = stage
        self.cause = cause
