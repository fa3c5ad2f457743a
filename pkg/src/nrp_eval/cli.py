"""Command line entry point.

Subcommands: ``validate``, ``rank``, ``generate``, ``agree``, ``report``.
Every option has a twin key in an INI config file (section ``[nrp]``)
passed via ``--config``; command line flags override config values.  The
effective configuration of a run is echoed into its output directory as
``run_config.json``.

Exit codes: 0 success, 1 usage error, 2 data or protocol error.
Diagnostics go to standard error; data goes to files or standard output.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from pathlib import Path

from .answers import load_answers
from .corpus import CorpusError, load_queries
from .genclient import GenParams, PROMPT_TEMPLATES, generate_answers
from .metrics import aggregate_nrp
from .pipeline import (
    PipelineError,
    agreement,
    discover_qrels,
    emit_reports,
    evaluate_answers,
    load_experiment,
    load_rankings_jsonl,
    model_size_rows,
    rank_flow_rows,
    rank_study_items,
    read_records_csv,
    read_validation_csv,
    save_rankings_jsonl,
    save_study_topics,
    select_study_sample,
    validate_rankers,
    write_agreement_csv,
    write_rank_flow_csv,
    write_records_csv,
    write_summary_csv,
    write_validation_csv,
)
from .protocol import ScorerProtocolError
from .scorers import make_scorer

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    if str(raw).lower() in ("1", "true", "yes", "on"):
        return True
    if str(raw).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


class _Options:
    """Flag values with config-file fallback; records the effective config."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config
        self.effective: dict = {"command": args.command}

    def get(self, key, default=None, cast=None):
        value = getattr(self.args, key, None)
        if value is None and key in self.config:
            raw = self.config[key]
            value = cast(raw) if cast else raw
        if value is None:
            value = default
        self.effective[key] = value
        return value

    def require(self, key, cast=None):
        value = self.get(key, None, cast)
        if value is None:
            flag = "--" + key.replace("_", "-")
            raise _UsageError(f"missing required option {flag} (config key {key!r})")
        return value

    def write_run_config(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "run_config.json", "w", encoding="utf-8") as fh:
            json.dump(self.effective, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _load_config(path: str) -> dict:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise CorpusError(f"cannot read config file {path}")
    if "nrp" not in parser:
        raise CorpusError(f"config file {path} has no [nrp] section")
    return dict(parser["nrp"])


def _load_data(opts: _Options):
    return load_experiment(
        opts.require("queries"),
        opts.require("docs"),
        discover_qrels(opts.require("qrels_dir")),
        min_chars=opts.get("min_chars", 50, int),
        strict=opts.get("strict", False, _parse_bool),
    )


def _workers(opts: _Options) -> int:
    return opts.get("workers", os.cpu_count() or 1, int)


def cmd_validate(opts: _Options) -> int:
    out_dir = Path(opts.require("out_dir"))
    specs = [s.strip() for s in opts.get("scorers", "tfidf,dph").split(",") if s.strip()]
    k = opts.get("k", 10, int)
    timeout = opts.get("timeout", 60.0, float)
    data = _load_data(opts)
    scorers = [make_scorer(spec, timeout=timeout, max_sessions=_workers(opts)) for spec in specs]
    try:
        report = validate_rankers(scorers, data, k=k)
    finally:
        for scorer in scorers:
            scorer.close()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_validation_csv(report, out_dir / "validation.csv")
    opts.write_run_config(out_dir)
    for row in report.rows:
        print(f"{row.scorer}\t{row.dimension}\tnDCG@{k}={row.ndcg:.4f}")
    print(f"winner: {report.winner}")
    return 0


def cmd_rank(opts: _Options) -> int:
    out_dir = Path(opts.require("out_dir"))
    answers = load_answers(opts.require("answers"))
    timeout = opts.get("timeout", 60.0, float)
    workers = _workers(opts)
    data = _load_data(opts)
    scorer = make_scorer(opts.require("scorer"), timeout=timeout, max_sessions=workers)
    try:
        records = evaluate_answers(scorer, answers, data, workers=workers)
    finally:
        scorer.close()
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, out_dir / "records.csv")
    write_summary_csv(aggregate_nrp(records), out_dir / "summary.csv")
    opts.write_run_config(out_dir)
    logger.info("wrote %d records to %s", len(records), out_dir / "records.csv")
    return 0


def cmd_generate(opts: _Options) -> int:
    out_path = Path(opts.require("out"))
    queries = load_queries(opts.require("queries"))
    params = GenParams(
        max_new_tokens=opts.get("max_new_tokens", 512, int),
        temperature=opts.get("temperature", 0.75, float),
        top_k=opts.get("top_k", 50, int),
        top_p=opts.get("top_p", 0.95, float),
        repetition_penalty=opts.get("repetition_penalty", 1.2, float),
        n_samples=opts.get("n_samples", 10, int),
    )
    written = generate_answers(
        endpoint=opts.require("endpoint"),
        model_name=opts.require("model"),
        queries=queries,
        template_id=opts.require("prompt"),
        params=params,
        out_path=out_path,
        concurrency=opts.get("concurrency", 1, int),
        timeout=opts.get("timeout", 120.0, float),
    )
    opts.write_run_config(out_path.parent if str(out_path.parent) else ".")
    logger.info("wrote %d new answers to %s", written, out_path)
    return 0


def cmd_agree(opts: _Options) -> int:
    out_dir = Path(opts.require("out_dir"))
    expert = load_rankings_jsonl(opts.require("expert"))
    system_path = opts.get("system")
    if system_path:
        system = load_rankings_jsonl(system_path)
    else:
        # no precomputed system rankings: run the study selection first
        data = _load_data(opts)
        records = read_records_csv(opts.require("records"))
        answers = load_answers(opts.require("answers"))
        models = [m.strip() for m in opts.require("models").split(",") if m.strip()]
        prompt_id = opts.get("prompt")
        scorer = make_scorer(
            opts.require("scorer"),
            timeout=opts.get("timeout", 60.0, float),
            max_sessions=_workers(opts),
        )
        try:
            topics = select_study_sample(
                records, data, scorer, models,
                n_topics=opts.get("n_topics", 20, int),
                seed=opts.get("seed", 0, int),
                prompt_id=prompt_id,
            )
            system = rank_study_items(topics, answers, data, scorer, prompt_id=prompt_id)
        finally:
            scorer.close()
        out_dir.mkdir(parents=True, exist_ok=True)
        save_study_topics(topics, out_dir / "study_sample.jsonl")
        save_rankings_jsonl(system, out_dir / "system_rankings.jsonl")
    result = agreement(system, expert)
    flow = rank_flow_rows({"system": system, "expert": expert})
    out_dir.mkdir(parents=True, exist_ok=True)
    write_agreement_csv(result, out_dir / "agreement.csv")
    write_rank_flow_csv(flow, out_dir / "rank_flow.csv")
    opts.write_run_config(out_dir)
    print(f"mean_rbo={result.mean_rbo!r} mean_tau={result.mean_tau!r}")
    return 0


def cmd_report(opts: _Options) -> int:
    out_dir = Path(opts.require("out_dir"))
    records = read_records_csv(opts.require("records"))
    validation = None
    validation_path = opts.get("validation")
    if validation_path:
        validation = read_validation_csv(validation_path, k=opts.get("k", 10, int))
    result = None
    flow = []
    system_path = opts.get("system")
    expert_path = opts.get("expert")
    if system_path and expert_path:
        system = load_rankings_jsonl(system_path)
        expert = load_rankings_jsonl(expert_path)
        result = agreement(system, expert)
        flow = rank_flow_rows({"system": system, "expert": expert})
    size_rows = []
    params_path = opts.get("model_params")
    if params_path:
        with open(params_path, encoding="utf-8") as fh:
            parameters = json.load(fh)
        size_rows = model_size_rows(records, parameters, prompt_id=opts.get("prompt"))
    paths = emit_reports(
        out_dir,
        records=records,
        validation=validation,
        agreement_result=result,
        rank_flow=flow,
        model_size=size_rows,
    )
    opts.write_run_config(out_dir)
    logger.info("report bundle written to %s", paths["report"])
    return 0


_HANDLERS = {
    "validate": cmd_validate,
    "rank": cmd_rank,
    "generate": cmd_generate,
    "agree": cmd_agree,
    "report": cmd_report,
}


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file with an [nrp] section")
    common.add_argument("--seed", type=int, help="seed for all sampling (default 0)")
    common.add_argument("--workers", type=int, help="parallel evaluation workers")
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase log verbosity (repeatable)")

    parser = _Parser(prog="nrp", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter,
                     parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    corpus_flags = _Parser(add_help=False)
    corpus_flags.add_argument("--queries", help="queries.tsv (id<TAB>text)")
    corpus_flags.add_argument("--docs", help="docs.jsonl document store")
    corpus_flags.add_argument("--qrels-dir", dest="qrels_dir",
                              help="directory holding qrels.<dimension>.txt files")
    corpus_flags.add_argument("--min-chars", dest="min_chars", type=int,
                              help="drop documents shorter than this (default 50)")
    corpus_flags.add_argument("--strict", action="store_const", const=True,
                              help="treat orphan qrels entries as errors")

    p = sub.add_parser("validate", parents=[common, corpus_flags],
                       help="nDCG@k of candidate scorers on every dimension")
    p.add_argument("--scorers", help="comma-separated scorer specs (default tfidf,dph)")
    p.add_argument("--k", type=int, help="nDCG cutoff (default 10)")
    p.add_argument("--timeout", type=float, help="external scorer timeout in seconds")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")

    p = sub.add_parser("rank", parents=[common, corpus_flags],
                       help="rank generated answers in their pools, compute NRP")
    p.add_argument("--scorer", help="scorer spec: tfidf|dph|echo|cmd:...|http:...")
    p.add_argument("--answers", help="answers.jsonl to evaluate")
    p.add_argument("--timeout", type=float, help="external scorer timeout in seconds")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")

    p = sub.add_parser("generate", parents=[common],
                       help="generate answers via an OpenAI-compatible endpoint")
    p.add_argument("--endpoint", help="chat completions URL")
    p.add_argument("--model", help="model name sent to the endpoint")
    p.add_argument("--queries", help="queries.tsv")
    p.add_argument("--prompt", choices=sorted(PROMPT_TEMPLATES),
                   help="prompt template id")
    p.add_argument("--out", help="answers.jsonl output path (appends, resumable)")
    p.add_argument("--n-samples", dest="n_samples", type=int,
                   help="samples per query (default 10)")
    p.add_argument("--max-new-tokens", dest="max_new_tokens", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--top-p", dest="top_p", type=float)
    p.add_argument("--repetition-penalty", dest="repetition_penalty", type=float)
    p.add_argument("--concurrency", type=int, help="max in-flight requests")
    p.add_argument("--timeout", type=float, help="per-request timeout in seconds")

    p = sub.add_parser("agree", parents=[common, corpus_flags],
                       help="agreement between system and expert rankings")
    p.add_argument("--expert", help="expert_rankings.jsonl")
    p.add_argument("--system", help="precomputed system_rankings.jsonl")
    p.add_argument("--records", help="records.csv (to select the study sample)")
    p.add_argument("--answers", help="answers.jsonl with the ranked answer texts")
    p.add_argument("--scorer", help="scorer spec used for system rankings")
    p.add_argument("--models", help="comma-separated model names for the sample")
    p.add_argument("--n-topics", dest="n_topics", type=int,
                   help="topics to sample (default 20)")
    p.add_argument("--prompt", help="restrict to answers of this prompt template")
    p.add_argument("--timeout", type=float, help="external scorer timeout in seconds")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")

    p = sub.add_parser("report", parents=[common],
                       help="bundle records/validation/agreement into one report")
    p.add_argument("--records", help="records.csv produced by 'rank'")
    p.add_argument("--validation", help="validation.csv produced by 'validate'")
    p.add_argument("--system", help="system_rankings.jsonl")
    p.add_argument("--expert", help="expert_rankings.jsonl")
    p.add_argument("--k", type=int, help="nDCG cutoff recorded in the bundle")
    p.add_argument("--model-params", dest="model_params",
                   help="JSON file mapping model name to parameter count; "
                        "emits the model_size.csv trend table")
    p.add_argument("--prompt", help="restrict the model-size table to one prompt")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")

    return parser


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        config = _load_config(args.config) if args.config else {}
    except CorpusError as exc:
        print(f"nrp: error: {exc}", file=sys.stderr)
        return 2
    verbosity = max(args.verbose or 0, int(config.get("verbose", 0)))
    _setup_logging(verbosity)
    opts = _Options(args, config)
    try:
        return _HANDLERS[args.command](opts)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"nrp: error: {exc}", file=sys.stderr)
        return 1
    except (CorpusError, PipelineError, ScorerProtocolError, ValueError) as exc:
        print(f"nrp: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"nrp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
