"""Stage-by-stage generation pipeline with resumable hashed artifacts.

Each stage reads declared input files, writes its outputs atomically
(temp + rename) and records a report of input/output content hashes
under reports/stages/. A stage whose recorded hashes still match is
skipped, so `run('all', ...)` resumes wherever work is stale. With a
fixed seed and one thread, two full runs produce byte-identical
artifacts (training throughput logs under reports/logs/ excepted; they
record wall-clock rates by design).
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field, replace
from datetime import timedelta
from pathlib import Path
from typing import Callable

import numpy as np

from .assemble import ArticleManifest, SentencePool, render_article
from .corpus import BOS_ID, EOS_ID, CorpusStore, Vocabulary, word_frequencies
from .decode import DecodeParams, generate_pool, read_pool, write_pool
from .lm import LanguageModel, LMConfig, load_checkpoint, save_checkpoint, train, write_training_log
from .novelty import CorpusIndex, corpus_sentences, filter_pool, summarize, write_report
from .site import SiteConfig, build_site, parse_timestamp, publish_article, save_article, slugify
from .tagging import (
    IdfTable,
    build_subsets,
    load_topics,
    read_tag_sidecar,
    tag_store,
    write_tag_sidecar,
)

__all__ = [
    "PipelineError",
    "PrerequisiteError",
    "PipelineConfig",
    "StageReport",
    "STAGES",
    "stable_seed",
    "run",
]

STAGES = ("ingest", "tag", "subsets", "train", "generate", "filter", "site")

_PATH_KEYS = (
    "corpus_source",
    "corpus",
    "topics",
    "checkpoints",
    "pools",
    "reports",
    "manifests",
    "articles",
    "site",
    "site_config",
)


class PipelineError(Exception):
    """Configuration or stage-execution failure (CLI exit code 2)."""


class PrerequisiteError(PipelineError):
    """A required stage output is missing (CLI exit code 3)."""


def stable_seed(*parts: object) -> int:
    """Deterministic 63-bit seed derived from the given parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


@dataclass
class PipelineConfig:
    base_dir: Path
    corpus_source: Path
    corpus: Path
    topics: Path
    checkpoints: Path
    pools: Path
    reports: Path
    manifests: Path
    articles: Path
    site: Path
    site_config: Path
    seed: int = 0
    novelty_threshold: float = 0.3
    novelty_exact: bool = False
    vocab_min_count: int = 3
    vocab_max_size: int = 20_000
    train_steps: int = 500
    samples_per_topic: int = 20
    lm: dict = field(default_factory=dict)
    lm_overrides: dict = field(default_factory=dict)
    decode: dict = field(default_factory=dict)
    now: str | None = None
    config_path: Path | None = None
    drafts: Path | None = None

    def drafts_dir(self) -> Path:
        """Where the curation service keeps draft records."""
        return self.drafts if self.drafts else self.manifests.parent / "drafts"

    def __post_init__(self) -> None:
        if not 0.0 < self.novelty_threshold < 1.0:
            raise PipelineError("novelty_threshold must be strictly between 0 and 1")
        if self.seed < 0:
            raise PipelineError("seed must be non-negative")
        if self.train_steps < 1 or self.samples_per_topic < 1:
            raise PipelineError("train_steps and samples_per_topic must be >= 1")

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise PipelineError(f"no such config file: {path}") from exc
        except json.JSONDecodeError as exc:
            raise PipelineError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(record, base_dir=path.parent, config_path=path)

    @classmethod
    def from_json(
        cls, record: dict, base_dir: str | Path, config_path: Path | None = None
    ) -> "PipelineConfig":
        if not isinstance(record, dict):
            raise PipelineError("pipeline config must be a JSON object")
        missing = [k for k in _PATH_KEYS if k not in record]
        if missing:
            raise PipelineError(f"pipeline config missing path fields: {missing}")
        base = Path(base_dir)
        paths = {k: (base / record[k]) for k in _PATH_KEYS}
        known = set(_PATH_KEYS) | {
            "seed",
            "novelty_threshold",
            "novelty_exact",
            "vocab_min_count",
            "vocab_max_size",
            "train_steps",
            "samples_per_topic",
            "lm",
            "lm_overrides",
            "decode",
            "now",
            "drafts",
        }
        unknown = set(record) - known
        if unknown:
            raise PipelineError(f"unknown pipeline config fields: {sorted(unknown)}")
        return cls(
            base_dir=base,
            drafts=(base / record["drafts"]) if "drafts" in record else None,
            seed=record.get("seed", 0),
            novelty_threshold=record.get("novelty_threshold", 0.3),
            novelty_exact=record.get("novelty_exact", False),
            vocab_min_count=record.get("vocab_min_count", 3),
            vocab_max_size=record.get("vocab_max_size", 20_000),
            train_steps=record.get("train_steps", 500),
            samples_per_topic=record.get("samples_per_topic", 20),
            lm=record.get("lm", {}),
            lm_overrides=record.get("lm_overrides", {}),
            decode=record.get("decode", {}),
            now=record.get("now"),
            config_path=config_path,
            **paths,
        )

    def lm_config(self, topic: str, vocab_size: int) -> tuple[LMConfig, int]:
        """Merged LMConfig plus step count for one topic."""
        merged: dict = dict(self.lm)
        merged.update(self.lm_overrides.get(topic, {}))
        steps = merged.pop("steps", self.train_steps)
        merged.pop("vocab_size", None)
        merged["seed"] = stable_seed(self.seed, "train", topic)
        try:
            return LMConfig(vocab_size=vocab_size, **merged), steps
        except TypeError as exc:
            raise PipelineError(f"bad lm config for topic {topic!r}: {exc}") from exc

    def decode_params(self, topic: str) -> DecodeParams:
        merged = dict(self.decode)
        merged["seed"] = stable_seed(self.seed, "generate", topic)
        merged.setdefault("mode", "sample")
        try:
            return DecodeParams(**merged)
        except TypeError as exc:
            raise PipelineError(f"bad decode config: {exc}") from exc


@dataclass
class StageReport:
    stage: str
    skipped: bool
    inputs: dict
    outputs: dict
    details: dict

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "skipped": self.skipped,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "details": self.details,
        }


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _tree_digest(path: Path) -> str:
    h = hashlib.sha256()
    for sub in sorted(p for p in path.rglob("*") if p.is_file()):
        h.update(str(sub.relative_to(path)).encode("utf-8"))
        h.update(b"\x00")
        h.update(_file_digest(sub).encode("ascii"))
        h.update(b"\x00")
    return h.hexdigest()


def _digest(path: Path) -> str | None:
    if path.is_dir():
        return _tree_digest(path)
    if path.is_file():
        return _file_digest(path)
    return None


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_write_json(path: Path, record: dict) -> None:
    _atomic_write_text(path, json.dumps(record, ensure_ascii=False, indent=2) + "\n")


def _swap_into_place(tmp: Path, final: Path) -> None:
    """Replace final (file or dir) with tmp; rename is the commit point."""
    final.parent.mkdir(parents=True, exist_ok=True)
    if final.is_dir():
        shutil.rmtree(final)
    elif final.exists():
        final.unlink()
    os.replace(tmp, final)


def _rel(config: PipelineConfig, path: Path) -> str:
    try:
        return str(path.relative_to(config.base_dir))
    except ValueError:
        return str(path)


class _Stage:
    """One pipeline stage: declared inputs/outputs plus an executor.

    `options` are non-file inputs (runtime flags) that join the recorded
    input map so changing them invalidates the stage like a file edit.
    """

    def __init__(
        self,
        name: str,
        inputs: list[Path],
        outputs: list[Path],
        execute: Callable[[], dict],
        options: dict | None = None,
    ):
        self.name = name
        self.inputs = inputs
        self.outputs = outputs
        self.execute = execute
        self.options = options or {}


def _load_tagged_store(config: PipelineConfig) -> CorpusStore:
    store = CorpusStore(config.corpus)
    sidecar = read_tag_sidecar(config.reports / "tags.jsonl")
    store.apply_tags({aid: ts.names() for aid, ts in sidecar.items()})
    return store


def _topic_names(config: PipelineConfig) -> list[str]:
    try:
        return [spec.name for spec in load_topics(config.topics)]
    except FileNotFoundError as exc:
        raise PipelineError(f"topics file missing: {config.topics}") from exc


def _topic_slug(topic: str) -> str:
    return slugify(topic)


def _subset_bodies(config: PipelineConfig, topic: str) -> list[str]:
    record = json.loads((config.reports / "subsets.json").read_text(encoding="utf-8"))
    by_name = {entry["topic"]: entry["article_ids"] for entry in record["topics"]}
    if topic not in by_name:
        raise PipelineError(f"subsets.json has no topic {topic!r}; re-run the subsets stage")
    store = CorpusStore(config.corpus)
    return [store.get(aid).body for aid in by_name[topic]]


def _stage_ingest(config: PipelineConfig) -> dict:
    tmp = config.corpus.with_name(config.corpus.name + f".tmp-{os.getpid()}")
    tmp.parent.mkdir(parents=True, exist_ok=True)
    if tmp.exists():
        tmp.unlink()
    stats = CorpusStore(tmp).ingest(config.corpus_source)
    _swap_into_place(tmp, config.corpus)
    return {"articles": stats.article_count, "words": stats.word_count}


def _stage_tag(config: PipelineConfig) -> dict:
    store = CorpusStore(config.corpus)
    tagsets = tag_store(store)
    out = config.reports / "tags.jsonl"
    tmp = out.with_name(out.name + f".tmp-{os.getpid()}")
    tmp.parent.mkdir(parents=True, exist_ok=True)
    write_tag_sidecar(tmp, tagsets)
    _swap_into_place(tmp, out)
    distinct = len({name for ts in tagsets for name in ts.names()})
    return {"articles": len(tagsets), "distinct_tags": distinct}


def _stage_subsets(config: PipelineConfig) -> dict:
    store = _load_tagged_store(config)
    specs = load_topics(config.topics)
    subsets = build_subsets(store, specs)
    record = {
        "topics": [
            {
                "topic": subset.topic,
                "article_ids": subset.article_ids,
                "articles": stats.article_count,
                "words": stats.word_count,
            }
            for subset, stats in subsets
        ]
    }
    _atomic_write_json(config.reports / "subsets.json", record)
    return {
        entry["topic"]: {"articles": entry["articles"], "words": entry["words"]}
        for entry in record["topics"]
    }


def _stage_train(config: PipelineConfig) -> dict:
    details: dict = {}
    tmp_root = config.checkpoints.with_name(config.checkpoints.name + f".tmp-{os.getpid()}")
    if tmp_root.exists():
        shutil.rmtree(tmp_root)
    tmp_root.mkdir(parents=True)
    log_dir = config.reports / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    for topic in _topic_names(config):
        bodies = _subset_bodies(config, topic)
        if not bodies:
            raise PipelineError(
                f"topic {topic!r} has no articles; adjust the corpus or keyword sets"
            )
        vocab = Vocabulary.build(
            word_frequencies(bodies),
            min_count=config.vocab_min_count,
            max_size=config.vocab_max_size,
        )
        stream: list[int] = []
        for body in bodies:
            stream.append(BOS_ID)
            stream.extend(vocab.encode_text(body))
            stream.append(EOS_ID)
        cfg, steps = config.lm_config(topic, len(vocab))
        model = LanguageModel.init(cfg)
        log = train(model, np.asarray(stream, dtype=np.int64), steps)
        slug = _topic_slug(topic)
        save_checkpoint(model, tmp_root / slug, vocab)
        write_training_log(log_dir / f"{slug}.csv", log)
        details[topic] = {
            "steps": steps,
            "final_loss": round(log[-1].loss, 9) if log else None,
            "vocab_size": len(vocab),
            "parameters": model.param_count(),
            "tokens": len(stream),
        }
    _swap_into_place(tmp_root, config.checkpoints)
    return details


def _stage_generate(config: PipelineConfig) -> dict:
    details: dict = {}
    config.pools.mkdir(parents=True, exist_ok=True)
    for topic in _topic_names(config):
        slug = _topic_slug(topic)
        ckpt_dir = config.checkpoints / slug
        model = load_checkpoint(ckpt_dir)
        vocab = Vocabulary.load(ckpt_dir / "vocab.json")
        params = config.decode_params(topic)
        samples = generate_pool(
            model,
            vocab,
            params,
            count=config.samples_per_topic,
            topic=topic,
            model_checkpoint=_rel(config, ckpt_dir),
        )
        out = config.pools / f"{slug}.samples.jsonl"
        tmp = out.with_name(out.name + f".tmp-{os.getpid()}")
        write_pool(samples, tmp)
        _swap_into_place(tmp, out)
        details[topic] = {
            "samples": len(samples),
            "tokens": sum(len(s.token_ids) for s in samples),
        }
    return details


def _stage_filter(config: PipelineConfig, threads: int) -> dict:
    details: dict = {}
    store = CorpusStore(config.corpus)
    index = CorpusIndex(corpus_sentences(store))
    config.pools.mkdir(parents=True, exist_ok=True)
    for topic in _topic_names(config):
        slug = _topic_slug(topic)
        samples = read_pool(config.pools / f"{slug}.samples.jsonl")
        reports, _ = filter_pool(
            samples,
            index,
            threshold=config.novelty_threshold,
            exact=config.novelty_exact,
            threads=threads,
        )
        report_path = config.reports / f"{slug}.novelty.jsonl"
        tmp = report_path.with_name(report_path.name + f".tmp-{os.getpid()}")
        write_report(reports, tmp)
        _swap_into_place(tmp, report_path)
        pool = SentencePool.from_reports(topic, reports, index)
        kept_path = config.pools / f"{slug}.kept.jsonl"
        tmp = kept_path.with_name(kept_path.name + f".tmp-{os.getpid()}")
        pool.save(tmp)
        _swap_into_place(tmp, kept_path)
        summary = summarize(reports)
        details[topic] = {"kept": summary["kept"], "rejected": summary["rejected"]}
    return details


def _stage_site(config: PipelineConfig) -> dict:
    site_cfg = SiteConfig.load(config.site_config)
    if site_cfg.portrait_path:
        site_cfg = replace(
            site_cfg, portrait_path=str(config.site_config.parent / site_cfg.portrait_path)
        )
    manifests = [ArticleManifest.load(p) for p in sorted(config.manifests.glob("*.json"))]
    ready = [m for m in manifests if m.status in ("validated", "published")]
    ready.sort(key=lambda m: m.id)

    published = []
    if ready:
        idf = IdfTable.build(CorpusStore(config.corpus))
        base_ts = config.now or "1970-01-01T00:00:00Z"
        base = parse_timestamp(base_ts)
        pools: dict[str, SentencePool] = {}
        for i, manifest in enumerate(ready):
            slug = _topic_slug(manifest.topic)
            if manifest.topic not in pools:
                kept_path = config.pools / f"{slug}.kept.jsonl"
                if not kept_path.exists():
                    raise PrerequisiteError(
                        f"manifest {manifest.id!r} needs {_rel(config, kept_path)}; "
                        "run 'filter' first"
                    )
                pools[manifest.topic] = SentencePool.load(kept_path, topic=manifest.topic)
            article = render_article(manifest, pools[manifest.topic])
            when = (base + timedelta(minutes=i)).strftime("%Y-%m-%dT%H:%M:%SZ")
            published.append(publish_article(article, when, idf))

    tmp_articles = config.articles.with_name(config.articles.name + f".tmp-{os.getpid()}")
    if tmp_articles.exists():
        shutil.rmtree(tmp_articles)
    tmp_articles.mkdir(parents=True)
    for pub in published:
        save_article(pub, tmp_articles)
    _swap_into_place(tmp_articles, config.articles)

    tmp_site = config.site.with_name(config.site.name + f".tmp-{os.getpid()}")
    if tmp_site.exists():
        shutil.rmtree(tmp_site)
    build_site(published, site_cfg, now=config.now, output_dir=tmp_site)
    _swap_into_place(tmp_site, config.site)
    pages = sum(1 for p in config.site.rglob("*.html"))
    return {"articles": len(published), "pages": pages}


def _build_stages(config: PipelineConfig, threads: int) -> dict[str, _Stage]:
    cfg_file = [config.config_path] if config.config_path else []
    tags_file = config.reports / "tags.jsonl"
    subsets_file = config.reports / "subsets.json"
    slugs = None

    def topic_files(pattern: str) -> list[Path]:
        nonlocal slugs
        if slugs is None:
            slugs = [_topic_slug(t) for t in _topic_names(config)]
        return [Path(str(pattern).format(slug=s)) for s in slugs]

    stages = {
        "ingest": _Stage(
            "ingest",
            cfg_file + [config.corpus_source],
            [config.corpus],
            lambda: _stage_ingest(config),
        ),
        "tag": _Stage(
            "tag",
            cfg_file + [config.corpus],
            [tags_file],
            lambda: _stage_tag(config),
        ),
        "subsets": _Stage(
            "subsets",
            cfg_file + [config.corpus, tags_file, config.topics],
            [subsets_file],
            lambda: _stage_subsets(config),
        ),
        "train": _Stage(
            "train",
            cfg_file + [config.corpus, subsets_file, config.topics],
            [config.checkpoints],
            lambda: _stage_train(config),
        ),
        "generate": _Stage(
            "generate",
            cfg_file + [config.checkpoints, config.topics],
            topic_files(config.pools / "{slug}.samples.jsonl"),
            lambda: _stage_generate(config),
        ),
        "filter": _Stage(
            "filter",
            cfg_file
            + [config.corpus, config.topics]
            + topic_files(config.pools / "{slug}.samples.jsonl"),
            topic_files(config.pools / "{slug}.kept.jsonl")
            + topic_files(config.reports / "{slug}.novelty.jsonl"),
            lambda: _stage_filter(config, threads),
        ),
        "site": _Stage(
            "site",
            cfg_file
            + [config.site_config, config.topics, config.manifests]
            + topic_files(config.pools / "{slug}.kept.jsonl"),
            [config.articles, config.site],
            lambda: _stage_site(config),
            options={"now": config.now},
        ),
    }
    return stages


def _producer_of(config: PipelineConfig, path: Path, stages: dict[str, _Stage]) -> str | None:
    for name in STAGES:
        for out in stages[name].outputs:
            if out == path:
                return name
    return None


def _report_path(config: PipelineConfig, stage: str) -> Path:
    return config.reports / "stages" / f"{stage}.json"


def _current_hashes(
    config: PipelineConfig, paths: list[Path], options: dict | None = None
) -> dict | None:
    out = {f"option:{k}": json.dumps(v, sort_keys=True) for k, v in (options or {}).items()}
    for path in paths:
        digest = _digest(path)
        if digest is None:
            return None
        out[_rel(config, path)] = digest
    return out


def _is_up_to_date(config: PipelineConfig, stage: _Stage) -> bool:
    report_file = _report_path(config, stage.name)
    if not report_file.exists():
        return False
    try:
        recorded = json.loads(report_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return False
    inputs = _current_hashes(config, stage.inputs, stage.options)
    outputs = _current_hashes(config, stage.outputs)
    if inputs is None or outputs is None:
        return False
    return recorded.get("inputs") == inputs and recorded.get("outputs") == outputs


def _run_stage(config: PipelineConfig, stage: _Stage, stages: dict, force: bool) -> StageReport:
    for path in stage.inputs:
        if _digest(path) is None:
            producer = _producer_of(config, path, stages)
            if producer:
                raise PrerequisiteError(
                    f"stage {stage.name!r} needs {_rel(config, path)}; run {producer!r} first"
                )
            raise PipelineError(f"stage {stage.name!r} input missing: {_rel(config, path)}")
    if not force and _is_up_to_date(config, stage):
        recorded = json.loads(_report_path(config, stage.name).read_text(encoding="utf-8"))
        return StageReport(
            stage=stage.name,
            skipped=True,
            inputs=recorded["inputs"],
            outputs=recorded["outputs"],
            details=recorded["details"],
        )
    details = stage.execute()
    report = StageReport(
        stage=stage.name,
        skipped=False,
        inputs=_current_hashes(config, stage.inputs, stage.options) or {},
        outputs=_current_hashes(config, stage.outputs) or {},
        details=details,
    )
    record = report.to_json()
    del record["skipped"]  # report files describe the executed run only
    _atomic_write_json(_report_path(config, stage.name), record)
    return report


def run(
    stage: str,
    config: PipelineConfig,
    threads: int = 1,
    force: bool = False,
) -> list[StageReport]:
    """Run one stage (or 'all') and return the reports in execution order."""
    if stage != "all" and stage not in STAGES:
        raise PipelineError(f"unknown stage {stage!r}; expected one of {list(STAGES) + ['all']}")
    if threads < 1:
        raise PipelineError("threads must be >= 1")
    # The manifests dir is a human-populated input; an empty one is valid.
    config.manifests.mkdir(parents=True, exist_ok=True)
    stages = _build_stages(config, threads)
    names = list(STAGES) if stage == "all" else [stage]
    return [_run_stage(config, stages[name], stages, force) for name in names]
