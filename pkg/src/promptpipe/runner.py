"""Configuration-driven pipeline: wrap, encode, score, project, report.

The runner composes the other modules without hidden state: templates
and the verbalizer are loaded once, each example flows through
wrap -> encode -> score -> project, per-template class scores are
ensembled by arithmetic mean, and results are written as JSONL in
dataset order. ``PROMPT_PIPE_THREADS`` caps worker threads; output is
byte-identical for any thread count because results are buffered and
emitted in input order.

Two model interfaces are built in so the scoring path is exercisable
without a language model: a logits file (JSONL keyed by guid) and a
context-independent toy scorer driven by a token-frequency file.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from .data import Dataset, load_jsonl
from .errors import (
    ClassListMismatch,
    ConfigError,
    DimensionMismatch,
    GuidMismatch,
    MissingLogits,
    PipelineStageError,
    PromptPipeError,
)
from .soft_plan import SoftEmbeddingPlan, build_soft_plan
from .template import TemplateAST, load_template_file
from .tokenization import TokenizedInput, Vocab, build_tokenizer, encode_wrapped
from .verbalizer import ClassScores, Verbalizer, calibrate, load_verbalizer, project
from .wrapping import InputExample, wrap_example, wrapped_text

__all__ = [
    "PipelineConfig",
    "ToyScorer",
    "LogitsFileScorer",
    "RunReport",
    "ensemble_scores",
    "evaluate_accuracy",
    "run_pipeline",
    "worker_count",
]

CONTENT_FREE_GUID = "__content_free__"


@dataclass
class PipelineConfig:
    templates: list[str] = field(default_factory=list)
    dataset: str = ""
    vocab: str = ""
    verbalizer: str = ""
    tokenizer_kind: str = "wordpiece"
    max_len: int = 128
    add_special_tokens: bool = True
    aggregation: str = "mean_log_prob"
    calibrate: bool = False
    seed: int = 0
    logits_file: str | None = None
    frequency_file: str | None = None
    output: str | None = None

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        """Load a YAML or JSON config document, then apply overrides."""
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith(".json"):
            raw = json.loads(text)
        else:
            raw = yaml.safe_load(text)
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        # paths in the config file are relative to the file; override paths
        # are taken as given (the caller's working directory)
        base = Path(path).parent
        if isinstance(raw.get("templates"), str):
            raw["templates"] = [raw["templates"]]
        if "templates" in raw:
            raw["templates"] = [str(_resolve(base, p)) for p in raw["templates"]]
        for name in ("dataset", "vocab", "verbalizer", "logits_file", "frequency_file", "output"):
            if raw.get(name):
                raw[name] = str(_resolve(base, raw[name]))
        merged = dict(raw)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        if isinstance(merged.get("templates"), str):
            merged["templates"] = [merged["templates"]]
        return cls(**merged)

    def validate(self) -> None:
        if not self.templates:
            raise ConfigError("config needs at least one template file")
        for name in ("dataset", "vocab", "verbalizer"):
            if not getattr(self, name):
                raise ConfigError(f"config is missing {name!r}")
        if (self.logits_file is None) == (self.frequency_file is None):
            raise ConfigError(
                "configure exactly one model interface: logits_file or frequency_file"
            )
        if self.max_len < 1:
            raise ConfigError("max_len must be positive")


def _resolve(base: Path, path: str | Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base / p


class ToyScorer:
    """Context-independent scorer: one logit per vocabulary token.

    Logits come from a JSON frequency file mapping token text to a real
    value; absent tokens score 0.0. Every mask position receives the
    same row, which is enough to drive the projection path end to end.
    """

    def __init__(self, frequencies: dict[str, float], vocab: Vocab):
        row = np.zeros(len(vocab), dtype=np.float64)
        for token, value in frequencies.items():
            index = vocab.ids.get(token)
            if index is not None:
                row[index] = float(value)
        self._row = row

    @classmethod
    def from_file(cls, path: str | Path, vocab: Vocab) -> "ToyScorer":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ConfigError(f"frequency file {path} must be a JSON object")
        return cls(raw, vocab)

    def __call__(self, guid: str, tokenized: TokenizedInput) -> np.ndarray:
        n = len(tokenized.mask_positions)
        return np.tile(self._row, (n, 1))


class LogitsFileScorer:
    """Replays logits from a JSONL file of {guid, mask_logits} records."""

    def __init__(self, path: str | Path, vocab_size: int):
        self.vocab_size = vocab_size
        self._rows: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    guid = obj["guid"]
                    rows = np.asarray(obj["mask_logits"], dtype=np.float64)
                except (ValueError, KeyError, TypeError) as exc:
                    raise ConfigError(f"{path}:{line_no}: bad logits record: {exc}") from None
                if rows.ndim != 2 or rows.shape[1] != vocab_size:
                    raise DimensionMismatch(
                        f"{path}:{line_no}: mask_logits must be rows of width {vocab_size}"
                    )
                self._rows[guid] = rows

    def __call__(self, guid: str, tokenized: TokenizedInput) -> np.ndarray:
        rows = self._rows.get(guid)
        if rows is None:
            raise MissingLogits(guid)
        if rows.shape[0] != len(tokenized.mask_positions):
            raise DimensionMismatch(
                f"guid {guid!r} has {rows.shape[0]} logits rows for "
                f"{len(tokenized.mask_positions)} mask positions"
            )
        return rows


Scorer = Callable[[str, TokenizedInput], np.ndarray]


@dataclass
class RunReport:
    results: list[dict]
    accuracy: float | None
    n_examples: int
    n_labeled: int


def ensemble_scores(per_template: Sequence[ClassScores]) -> ClassScores:
    """Arithmetic mean of aligned class scores across templates."""
    if not per_template:
        raise ClassListMismatch("no scores to ensemble")
    first = per_template[0]
    for other in per_template[1:]:
        if other.classes != first.classes:
            raise ClassListMismatch(
                f"class lists differ: {first.classes} vs {other.classes}"
            )
    stacked = np.array([s.scores for s in per_template], dtype=np.float64)
    mean = stacked.mean(axis=0)
    return ClassScores(classes=first.classes, scores=tuple(float(v) for v in mean))


def evaluate_accuracy(
    preds: Sequence[tuple[str, str]], golds: Sequence[tuple[str, str]]
) -> float:
    """Exact-match accuracy over (guid, class) pairs aligned by position."""
    if not golds:
        raise ValueError("golds must be non-empty")
    if len(preds) != len(golds):
        raise GuidMismatch(f"{len(preds)} predictions for {len(golds)} golds")
    correct = 0
    for (pred_guid, pred_label), (gold_guid, gold_label) in zip(preds, golds):
        if pred_guid != gold_guid:
            raise GuidMismatch(f"prediction guid {pred_guid!r} != gold guid {gold_guid!r}")
        correct += pred_label == gold_label
    return correct / len(golds)


def worker_count() -> int:
    """Worker threads for per-example stages, capped by PROMPT_PIPE_THREADS."""
    raw = os.environ.get("PROMPT_PIPE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _build_scorer(cfg: PipelineConfig, vocab: Vocab) -> Scorer:
    if cfg.frequency_file is not None:
        return ToyScorer.from_file(cfg.frequency_file, vocab)
    assert cfg.logits_file is not None
    return LogitsFileScorer(cfg.logits_file, len(vocab))


def _content_free_example(ast: TemplateAST) -> InputExample:
    return InputExample(
        guid=CONTENT_FREE_GUID, meta={key: "" for key in ast.meta_keys()}
    )


@dataclass
class _Pipeline:
    templates: list[TemplateAST]
    plans: list[SoftEmbeddingPlan]
    tokenizer: object
    verbalizer: Verbalizer
    scorer: Scorer
    calibrations: list[list[list[float]] | None]
    cfg: PipelineConfig

    def process(self, example: InputExample) -> dict:
        per_template: list[ClassScores] = []
        text = ""
        for index, (ast, plan) in enumerate(zip(self.templates, self.plans)):
            stage = "wrap"
            try:
                wrapped = wrap_example(ast, example, plan)
                if index == 0:
                    text = wrapped_text(wrapped)
                stage = "encode"
                tokenized = encode_wrapped(
                    wrapped,
                    self.tokenizer,
                    self.cfg.max_len,
                    add_special_tokens=self.cfg.add_special_tokens,
                )
                stage = "score"
                rows = self.scorer(example.guid, tokenized)
                if np.asarray(rows).shape[0] != len(tokenized.mask_positions):
                    raise DimensionMismatch(
                        f"scorer returned {np.asarray(rows).shape[0]} rows for "
                        f"{len(tokenized.mask_positions)} mask positions"
                    )
                stage = "project"
                per_template.append(
                    project(
                        rows,
                        self.verbalizer,
                        aggregation=self.cfg.aggregation,
                        calibration=self.calibrations[index],
                    )
                )
            except PipelineStageError:
                raise
            except PromptPipeError as exc:
                raise PipelineStageError(example.guid, stage, exc) from exc
        combined = ensemble_scores(per_template)
        return {
            "guid": example.guid,
            "wrapped_text": text,
            "predicted_class": combined.predicted_label,
            "class_scores": [float(s) for s in combined.scores],
        }


def _setup(cfg: PipelineConfig) -> tuple[_Pipeline, Dataset]:
    cfg.validate()
    templates: list[TemplateAST] = []
    for path in cfg.templates:
        templates.extend(load_template_file(path))
    if not templates:
        raise ConfigError("template files define no templates")
    vocab = Vocab.from_file(cfg.vocab)
    tokenizer = build_tokenizer(cfg.tokenizer_kind, vocab)
    verbalizer = load_verbalizer(cfg.verbalizer, tokenizer)
    scorer = _build_scorer(cfg, vocab)
    plans = [build_soft_plan(ast, tokenizer) for ast in templates]
    dataset = load_jsonl(cfg.dataset)

    calibrations: list[list[list[float]] | None] = []
    for ast, plan in zip(templates, plans):
        if not cfg.calibrate:
            calibrations.append(None)
            continue
        blank = wrap_example(ast, _content_free_example(ast), plan)
        tokenized = encode_wrapped(
            blank, tokenizer, cfg.max_len, add_special_tokens=cfg.add_special_tokens
        )
        calibrations.append(
            calibrate(lambda t: scorer(CONTENT_FREE_GUID, t), verbalizer, tokenized)
        )
    pipeline = _Pipeline(
        templates=templates,
        plans=plans,
        tokenizer=tokenizer,
        verbalizer=verbalizer,
        scorer=scorer,
        calibrations=calibrations,
        cfg=cfg,
    )
    return pipeline, dataset


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Run the full pipeline over a dataset; see the module docstring."""
    pipeline, dataset = _setup(cfg)
    workers = worker_count()
    if workers > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(pipeline.process, dataset.examples))
    else:
        results = [pipeline.process(ex) for ex in dataset.examples]

    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as handle:
            for record in results:
                handle.write(json.dumps(record, ensure_ascii=False))
                handle.write("\n")

    labeled = [(ex, res) for ex, res in zip(dataset.examples, results) if ex.label]
    accuracy = None
    if labeled:
        preds = [(res["guid"], res["predicted_class"]) for _, res in labeled]
        golds = [(ex.guid, ex.label) for ex, _ in labeled]
        accuracy = evaluate_accuracy(preds, golds)
    return RunReport(
        results=results,
        accuracy=accuracy,
        n_examples=len(dataset),
        n_labeled=len(labeled),
    )
