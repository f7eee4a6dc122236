"""Command-line interface.

One subcommand per pipeline stage for debuggability (`parse`, `wrap`,
`tokenize`, `plan`, `sample`, `score`) plus `run` for the full
configuration-driven pipeline. Flags are the kebab-case spellings of the
config fields and override config-file values.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import example_to_dict, fewshot_sample, load_jsonl, save_jsonl
from .errors import PromptPipeError
from .runner import PipelineConfig, run_pipeline
from .soft_plan import build_soft_plan
from .template import load_template_file, serialize_template, validate_template
from .tokenization import Vocab, build_tokenizer, encode_wrapped
from .verbalizer import load_verbalizer, project
from .wrapping import wrap_example, wrapped_text


def _emit(lines, output: str | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if output:
        with open(output, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _node_to_dict(node) -> dict:
    out: dict = {"kind": node.kind.value}
    if node.text is not None:
        out["text"] = node.text
    if node.meta_key is not None:
        out["meta_key"] = node.meta_key
    if node.soft_id is not None:
        out["soft_id"] = node.soft_id
    if node.duplicate != 1:
        out["duplicate"] = node.duplicate
    out["shortenable"] = node.shortenable
    if node.post_processing is not None:
        out["post_processing"] = node.post_processing.value
    return out


def cmd_parse(args) -> int:
    templates = load_template_file(args.template_file)
    known = set(args.meta_keys.split(",")) if args.meta_keys else None
    lines = []
    for ast in templates:
        record = {
            "source": ast.source,
            "canonical": serialize_template(ast),
            "nodes": [_node_to_dict(n) for n in ast.nodes],
        }
        if known is not None:
            record["diagnostics"] = [
                {"code": d.code, "message": d.message, "node_index": d.node_index}
                for d in validate_template(ast, known)
            ]
        lines.append(json.dumps(record, ensure_ascii=False))
    _emit(lines, args.output)
    return 0


def _single_template(args):
    templates = load_template_file(args.template_file)
    if not templates:
        raise PromptPipeError(f"no templates in {args.template_file}")
    index = args.template_index
    if not 0 <= index < len(templates):
        raise PromptPipeError(
            f"template index {index} out of range (file has {len(templates)})"
        )
    return templates[index]


def cmd_wrap(args) -> int:
    ast = _single_template(args)
    dataset = load_jsonl(args.dataset)
    lines = []
    for example in dataset:
        wrapped = wrap_example(ast, example)
        lines.append(
            json.dumps(
                {"guid": example.guid, "wrapped_text": wrapped_text(wrapped)},
                ensure_ascii=False,
            )
        )
    _emit(lines, args.output)
    return 0


def cmd_tokenize(args) -> int:
    ast = _single_template(args)
    vocab = Vocab.from_file(args.vocab)
    tokenizer = build_tokenizer(args.tokenizer_kind, vocab)
    plan = build_soft_plan(ast, tokenizer)
    dataset = load_jsonl(args.dataset)
    lines = []
    for example in dataset:
        wrapped = wrap_example(ast, example, plan)
        tokenized = encode_wrapped(
            wrapped, tokenizer, args.max_len, add_special_tokens=args.add_special_tokens
        )
        record = {"guid": example.guid}
        record.update(tokenized.to_dict())
        lines.append(json.dumps(record, ensure_ascii=False))
    _emit(lines, args.output)
    return 0


def cmd_plan(args) -> int:
    ast = _single_template(args)
    vocab = Vocab.from_file(args.vocab)
    tokenizer = build_tokenizer(args.tokenizer_kind, vocab)
    plan = build_soft_plan(ast, tokenizer)
    _emit([plan.to_json()], args.output)
    return 0


def cmd_sample(args) -> int:
    dataset = load_jsonl(args.dataset)
    sampled = fewshot_sample(dataset, args.k, args.seed, strict=not args.lenient)
    if args.output:
        save_jsonl(sampled, args.output)
    else:
        for example in sampled:
            sys.stdout.write(json.dumps(example_to_dict(example), ensure_ascii=False) + "\n")
    return 0


def cmd_score(args) -> int:
    vocab = Vocab.from_file(args.vocab)
    tokenizer = build_tokenizer(args.tokenizer_kind, vocab)
    verbalizer = load_verbalizer(args.verbalizer, tokenizer)
    lines = []
    with open(args.logits_file, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            obj = json.loads(line)
            scores = project(obj["mask_logits"], verbalizer, aggregation=args.aggregation)
            lines.append(
                json.dumps(
                    {
                        "guid": obj["guid"],
                        "predicted_class": scores.predicted_label,
                        "class_scores": [float(s) for s in scores.scores],
                    },
                    ensure_ascii=False,
                )
            )
    _emit(lines, args.output)
    return 0


def cmd_run(args) -> int:
    overrides = {
        "templates": args.templates,
        "dataset": args.dataset,
        "vocab": args.vocab,
        "verbalizer": args.verbalizer,
        "tokenizer_kind": args.tokenizer_kind,
        "max_len": args.max_len,
        "add_special_tokens": args.add_special_tokens,
        "aggregation": args.aggregation,
        "calibrate": args.calibrate,
        "seed": args.seed,
        "logits_file": args.logits_file,
        "frequency_file": args.frequency_file,
        "output": args.output,
    }
    if args.config:
        cfg = PipelineConfig.from_file(args.config, overrides)
    else:
        cfg = PipelineConfig(**{k: v for k, v in overrides.items() if v is not None})
    report = run_pipeline(cfg)
    summary = {
        "n_examples": report.n_examples,
        "n_labeled": report.n_labeled,
        "accuracy": report.accuracy,
    }
    sys.stdout.write(json.dumps(summary) + "\n")
    return 0


def _add_template_args(parser, with_index: bool = True) -> None:
    parser.add_argument("--template-file", required=True, help="template text file")
    if with_index:
        parser.add_argument(
            "--template-index", type=int, default=0, help="which template line to use"
        )


def _add_tokenizer_args(parser) -> None:
    parser.add_argument("--vocab", required=True, help="vocabulary file")
    parser.add_argument(
        "--tokenizer-kind", default="wordpiece", choices=["whitespace", "wordpiece"]
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptpipe",
        description="Prompt template compiler and classification scoring pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse templates and print their structure")
    _add_template_args(p, with_index=False)
    p.add_argument("--meta-keys", help="comma-separated keys to validate against")
    p.add_argument("--output")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("wrap", help="wrap a dataset with one template")
    _add_template_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_wrap)

    p = sub.add_parser("tokenize", help="wrap and encode a dataset")
    _add_template_args(p)
    p.add_argument("--dataset", required=True)
    _add_tokenizer_args(p)
    p.add_argument("--max-len", type=int, default=128)
    p.add_argument(
        "--no-special-tokens",
        dest="add_special_tokens",
        action="store_false",
        help="do not add CLS/SEP",
    )
    p.add_argument("--output")
    p.set_defaults(func=cmd_tokenize, add_special_tokens=True)

    p = sub.add_parser("plan", help="export a template's soft-token slot plan")
    _add_template_args(p)
    _add_tokenizer_args(p)
    p.add_argument("--output")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sample", help="draw a deterministic few-shot sample")
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, required=True, help="examples per class")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--lenient", action="store_true", help="take whole class when short of k"
    )
    p.add_argument("--output")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("score", help="project a logits file onto classes")
    p.add_argument("--logits-file", required=True)
    p.add_argument("--verbalizer", required=True)
    _add_tokenizer_args(p)
    p.add_argument("--aggregation", default="mean_log_prob")
    p.add_argument("--output")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("run", help="run the full pipeline from a config")
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--templates", action="append", help="template file (repeatable)")
    p.add_argument("--dataset")
    p.add_argument("--vocab")
    p.add_argument("--verbalizer")
    p.add_argument("--tokenizer-kind", choices=["whitespace", "wordpiece"])
    p.add_argument("--max-len", type=int)
    p.add_argument(
        "--add-special-tokens", dest="add_special_tokens", action="store_true"
    )
    p.add_argument(
        "--no-special-tokens", dest="add_special_tokens", action="store_false"
    )
    p.add_argument("--aggregation")
    p.add_argument("--calibrate", action="store_true", default=None)
    p.add_argument("--no-calibrate", dest="calibrate", action="store_false")
    p.add_argument("--seed", type=int)
    p.add_argument("--logits-file")
    p.add_argument("--frequency-file")
    p.add_argument("--output")
    p.set_defaults(func=cmd_run, add_special_tokens=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PromptPipeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
