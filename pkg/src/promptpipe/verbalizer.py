"""Label-word verbalizer: project mask-position logits onto classes.

A verbalizer maps each class to one or more label words. Projection
log-softmax-normalizes each mask position's logits row, scores a label
word as the mean log-probability of its subword pieces, combines a
class's words with a selectable aggregation (mean log-prob by default),
and sums class scores across mask positions. Calibration subtracts each
label word's prior log-probability, measured on a content-free input,
before aggregation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateClass,
    EmptyClass,
    UnreadableFile,
    VerbalizerError,
)

__all__ = [
    "Aggregation",
    "Verbalizer",
    "ClassScores",
    "build_verbalizer",
    "load_verbalizer",
    "log_softmax",
    "project",
    "project_per_position",
    "calibrate",
]


class Aggregation(Enum):
    MEAN_LOG_PROB = "mean_log_prob"
    MAX = "max"
    FIRST = "first"


@dataclass(frozen=True)
class Verbalizer:
    classes: tuple[str, ...]
    label_words: dict[str, tuple[str, ...]]
    label_word_ids: dict[str, tuple[tuple[int, ...], ...]]


@dataclass(frozen=True)
class ClassScores:
    """Per-class scores aligned with the verbalizer's class order."""

    classes: tuple[str, ...]
    scores: tuple[float, ...]

    @property
    def predicted_class(self) -> int:
        """Index of the best class; ties break toward the lowest index."""
        return int(np.argmax(self.scores))

    @property
    def predicted_label(self) -> str:
        return self.classes[self.predicted_class]

    def normalized(self) -> "ClassScores":
        """Scores log-softmaxed over classes, so their exps sum to one."""
        normed = log_softmax(np.asarray(self.scores, dtype=np.float64))
        return ClassScores(classes=self.classes, scores=tuple(float(v) for v in normed))


def log_softmax(row: np.ndarray) -> np.ndarray:
    shifted = row - np.max(row)
    return shifted - np.log(np.sum(np.exp(shifted)))


def build_verbalizer(label_words: Mapping[str, Sequence[str]], tokenizer) -> Verbalizer:
    """Construct a verbalizer from a class -> word-list mapping."""
    if not label_words:
        raise EmptyClass("verbalizer defines no classes")
    classes = tuple(label_words.keys())
    words: dict[str, tuple[str, ...]] = {}
    word_ids: dict[str, tuple[tuple[int, ...], ...]] = {}
    for name in classes:
        entries = tuple(label_words[name])
        if not entries:
            raise EmptyClass(f"class {name!r} has no label words")
        encoded = []
        for word in entries:
            if not isinstance(word, str):
                raise VerbalizerError(f"class {name!r} has a non-string label word")
            ids = tuple(tokenizer.encode(word))
            if not ids:
                raise VerbalizerError(f"label word {word!r} tokenizes to nothing")
            encoded.append(ids)
        words[name] = entries
        word_ids[name] = tuple(encoded)
    return Verbalizer(classes=classes, label_words=words, label_word_ids=word_ids)


def load_verbalizer(path: str | Path, tokenizer) -> Verbalizer:
    """Load a JSON verbalizer file: a map from class name to word list."""

    def reject_duplicates(pairs):
        seen = {}
        for key, value in pairs:
            if key in seen:
                raise DuplicateClass(f"class {key!r} defined twice")
            seen[key] = value
        return seen

    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"cannot read verbalizer file {path}: {exc}") from None
    try:
        mapping = json.loads(raw, object_pairs_hook=reject_duplicates)
    except DuplicateClass:
        raise
    except ValueError as exc:
        raise UnreadableFile(f"verbalizer file {path} is not valid JSON: {exc}") from None
    if not isinstance(mapping, dict):
        raise UnreadableFile(f"verbalizer file {path} must be a JSON object")
    for name, value in mapping.items():
        if not isinstance(value, list):
            raise VerbalizerError(f"class {name!r} must map to a list of words")
    return build_verbalizer(mapping, tokenizer)


def _as_rows(logits, vocab_size: int | None = None) -> np.ndarray:
    rows = np.asarray(logits, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    if rows.ndim != 2:
        raise DimensionMismatch(f"logits must be a 2-d array, got shape {rows.shape}")
    if vocab_size is not None and rows.shape[1] != vocab_size:
        raise DimensionMismatch(
            f"logits rows have width {rows.shape[1]}, vocabulary has {vocab_size}"
        )
    return rows


def _word_scores(
    log_probs: np.ndarray, v: Verbalizer, calibration: Sequence[Sequence[float]] | None
) -> list[np.ndarray]:
    """Per class, the (possibly calibrated) score of each label word."""
    per_class: list[np.ndarray] = []
    for class_index, name in enumerate(v.classes):
        scores = np.array(
            [float(np.mean(log_probs[list(ids)])) for ids in v.label_word_ids[name]]
        )
        if calibration is not None:
            prior = np.asarray(calibration[class_index], dtype=np.float64)
            if prior.shape != scores.shape:
                raise DimensionMismatch(
                    f"calibration for class {name!r} has {prior.size} entries, "
                    f"expected {scores.size}"
                )
            scores = scores - prior
        per_class.append(scores)
    return per_class


def _aggregate(word_scores: np.ndarray, aggregation: Aggregation) -> float:
    if aggregation is Aggregation.MEAN_LOG_PROB:
        return float(np.mean(word_scores))
    if aggregation is Aggregation.MAX:
        return float(np.max(word_scores))
    return float(word_scores[0])


def project(
    logits,
    v: Verbalizer,
    aggregation: Aggregation | str = Aggregation.MEAN_LOG_PROB,
    calibration: Sequence[Sequence[float]] | None = None,
) -> ClassScores:
    """Project per-mask-position vocabulary logits onto class scores.

    ``logits`` is one row per mask position, each of vocabulary width.
    Scores from multiple mask positions are summed per class. The
    predicted class is the argmax, ties breaking toward index 0.
    """
    if isinstance(aggregation, str):
        aggregation = Aggregation(aggregation.lower())
    max_id = max(tid for name in v.classes for ids in v.label_word_ids[name] for tid in ids)
    rows = _as_rows(logits)
    if rows.shape[0] == 0:
        raise DimensionMismatch("no logits rows: need one per mask position")
    if rows.shape[1] <= max_id:
        raise DimensionMismatch(
            f"logits rows have width {rows.shape[1]} but label words use id {max_id}"
        )
    totals = np.zeros(len(v.classes), dtype=np.float64)
    for row in rows:
        log_probs = log_softmax(row)
        per_class = _word_scores(log_probs, v, calibration)
        totals += np.array([_aggregate(ws, aggregation) for ws in per_class])
    return ClassScores(classes=v.classes, scores=tuple(float(t) for t in totals))


def project_per_position(
    logits,
    verbalizers: Sequence[Verbalizer],
    aggregation: Aggregation | str = Aggregation.MEAN_LOG_PROB,
    calibrations: Sequence[Sequence[Sequence[float]] | None] | None = None,
) -> ClassScores:
    """Project with a distinct verbalizer per mask position.

    All verbalizers must share one class list; per-position class scores
    are summed, exactly as :func:`project` does for a single verbalizer
    (to which this reduces when every position uses the same one).
    """
    rows = _as_rows(logits)
    if rows.shape[0] != len(verbalizers):
        raise DimensionMismatch(
            f"{rows.shape[0]} logits rows for {len(verbalizers)} verbalizers"
        )
    classes = verbalizers[0].classes
    for v in verbalizers[1:]:
        if v.classes != classes:
            raise VerbalizerError(
                f"per-position verbalizers must share classes: {classes} vs {v.classes}"
            )
    totals = np.zeros(len(classes), dtype=np.float64)
    for index, (row, v) in enumerate(zip(rows, verbalizers)):
        calibration = calibrations[index] if calibrations is not None else None
        scores = project([row], v, aggregation=aggregation, calibration=calibration)
        totals += np.asarray(scores.scores)
    return ClassScores(classes=classes, scores=tuple(float(t) for t in totals))


def calibrate(
    scores_fn: Callable[[object], object],
    v: Verbalizer,
    content_free_input,
) -> list[list[float]]:
    """Measure label-word priors from a content-free input.

    ``scores_fn`` maps the content-free tokenized input to logits rows
    (one per mask position). The returned nested list is aligned with
    the verbalizer's classes and label words and can be passed to
    :func:`project` as ``calibration``; projection then subtracts each
    word's prior log-probability before aggregating.
    """
    rows = _as_rows(scores_fn(content_free_input))
    if rows.shape[0] == 0:
        raise DimensionMismatch("content-free input produced no logits rows")
    priors = None
    for row in rows:
        log_probs = log_softmax(row)
        per_class = _word_scores(log_probs, v, None)
        if priors is None:
            priors = per_class
        else:
            priors = [p + w for p, w in zip(priors, per_class)]
    assert priors is not None
    return [[float(x) for x in class_prior] for class_prior in priors]
