"""Command-line entry points.

`newsloom` drives the staged pipeline (and the local curation service),
`novelty` filters a sample pool against a corpus on its own, and
`build-site` renders published articles to static files. All three print
human-readable progress to stderr and machine-readable artifacts to
files, exiting 0 on success, 2 on validation or stage failure, and 3
when a prerequisite stage has not run yet.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .assemble import AssembleError, SentencePool
from .corpus import CorpusError, CorpusStore
from .decode import DecodeError, read_pool
from .lm import LMError
from .novelty import CorpusIndex, NoveltyError, corpus_sentences, filter_pool, summarize, write_report
from .pipeline import STAGES, PipelineConfig, PipelineError, PrerequisiteError, run
from .site import SiteConfig, SiteError, build_site, load_articles
from .tagging import TaggingError

_MODULE_ERRORS = (
    PipelineError,
    CorpusError,
    TaggingError,
    LMError,
    DecodeError,
    NoveltyError,
    AssembleError,
    SiteError,
)


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="newsloom",
        description="Staged text-generation pipeline: corpus to static site.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in STAGES + ("all",):
        p = sub.add_parser(name, help=f"run the {name!r} stage" if name != "all" else "run every stage in order")
        p.add_argument("--config", required=True, help="pipeline.json path")
        p.add_argument("--threads", type=int, default=1, help="worker cap for parallel stages")
        p.add_argument("--now", help="publication timestamp override (ISO 8601)")
        p.add_argument("--force", action="store_true", help="re-run even when outputs are up to date")

    p = sub.add_parser("serve", help="run the local curation service")
    p.add_argument("--config", required=True, help="pipeline.json path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--ui", help="directory of built UI assets to serve statically")

    args = parser.parse_args(argv)

    try:
        config = PipelineConfig.load(args.config)
    except PipelineError as exc:
        return _fail(str(exc), 2)

    if args.command == "serve":
        from .service import serve

        try:
            serve(config, host=args.host, port=args.port, ui_dir=args.ui)
        except _MODULE_ERRORS + (OSError,) as exc:
            return _fail(str(exc), 2)
        return 0

    if args.now is not None:
        config.now = args.now
    try:
        reports = run(args.command, config, threads=args.threads, force=args.force)
    except PrerequisiteError as exc:
        return _fail(str(exc), 3)
    except _MODULE_ERRORS as exc:
        return _fail(str(exc), 2)
    for report in reports:
        state = "skipped (up to date)" if report.skipped else "done"
        print(f"[{report.stage}] {state}", file=sys.stderr)
        for key, value in report.details.items():
            print(f"  {key}: {json.dumps(value, ensure_ascii=False)}", file=sys.stderr)
    return 0


def novelty_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="novelty",
        description="Filter generated sentences by edit-distance dissimilarity to a corpus.",
    )
    parser.add_argument("--pool", required=True, help="generated sample pool (JSONL)")
    parser.add_argument("--corpus", required=True, help="corpus store (JSONL)")
    parser.add_argument("--threshold", type=float, default=0.3, help="minimum dissimilarity to keep")
    parser.add_argument("--exact", action="store_true", help="always report the true closest match")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out", help="report path (default: alongside the pool)")
    parser.add_argument("--kept", help="also write kept sentences as a pool file")
    parser.add_argument("--topic", default="", help="topic label for the kept pool")
    args = parser.parse_args(argv)

    pool_path = Path(args.pool)
    out = Path(args.out) if args.out else pool_path.with_suffix(".novelty.jsonl")
    try:
        samples = read_pool(pool_path)
        store = CorpusStore(args.corpus)
        if not len(store):
            return _fail(f"corpus is empty or missing: {args.corpus}", 2)
        index = CorpusIndex(corpus_sentences(store))
        reports, _ = filter_pool(
            samples, index, threshold=args.threshold, exact=args.exact, threads=args.threads
        )
        write_report(reports, out)
        if args.kept:
            pool = SentencePool.from_reports(args.topic, reports, index)
            pool.save(args.kept)
    except _MODULE_ERRORS as exc:
        return _fail(str(exc), 2)
    except FileNotFoundError as exc:
        return _fail(str(exc), 2)
    stats = summarize(reports)
    print(f"kept {stats['kept']} of {len(reports)} sentences -> {out}", file=sys.stderr)
    return 0


def build_site_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="build-site",
        description="Render published articles into a static blog.",
    )
    parser.add_argument("--articles", required=True, help="directory of published-article JSON files")
    parser.add_argument("--config", required=True, help="site.json path")
    parser.add_argument("--now", help="build timestamp override (ISO 8601)")
    parser.add_argument("--out", help="output directory (overrides config)")
    args = parser.parse_args(argv)

    try:
        config = SiteConfig.load(args.config)
        articles = load_articles(args.articles)
        out = build_site(articles, config, now=args.now, output_dir=args.out)
    except _MODULE_ERRORS as exc:
        return _fail(str(exc), 2)
    except FileNotFoundError as exc:
        return _fail(str(exc), 2)
    print(f"built {len(articles)} articles -> {out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
