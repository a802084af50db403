"""Tag extraction and topical subset building.

Tags come from TF-IDF over tokenized article bodies plus capitalized
multiword spans emitted as entity tags. Articles join a topic subset when
any of their tags equals one of the topic's keywords (exact lowercase
token match; surface variants are listed explicitly in the keyword sets).
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import EOP, PUNCT_CHARS, CorpusStats, CorpusStore, tokenize

DEFAULT_TAG_COUNT = 12

_WORD_SPLIT = re.compile(r"\S+")
_SPAN_BREAK = set(".!?;:")


class TaggingError(Exception):
    pass


@dataclass
class TagSet:
    article_id: str
    tags: list[tuple[str, float]]  # (tag, score), descending score

    def names(self) -> list[str]:
        return [t for t, _ in self.tags]


@dataclass(frozen=True)
class TopicSpec:
    name: str
    keywords: frozenset[str]

    def __post_init__(self) -> None:
        if not self.keywords:
            raise TaggingError(f"topic {self.name!r}: keywords must be non-empty")
        for kw in self.keywords:
            if kw != kw.lower() or " " in kw:
                raise TaggingError(
                    f"topic {self.name!r}: keyword {kw!r} must be a lowercase single token"
                )


@dataclass
class TopicSubset:
    topic: str
    article_ids: list[str]


@dataclass
class IdfTable:
    """Inverse document frequencies: idf = ln(N / df).

    Words never seen in the corpus get df = 1, i.e. idf = ln(N).
    """

    idf: dict[str, float]
    doc_count: int

    @classmethod
    def build(cls, store: CorpusStore) -> "IdfTable":
        df: Counter[str] = Counter()
        n = 0
        for article in store:
            n += 1
            df.update(set(tokenize(article.body)))
        idf = {w: math.log(n / d) for w, d in df.items()}
        return cls(idf=idf, doc_count=n)

    def idf_of(self, word: str) -> float:
        got = self.idf.get(word)
        if got is not None:
            return got
        return math.log(max(self.doc_count, 1))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"doc_count": self.doc_count, "idf": self.idf}, ensure_ascii=False),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "IdfTable":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(idf=payload["idf"], doc_count=payload["doc_count"])


def load_stopwords() -> frozenset[str]:
    text = resources.files("newsloom").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def load_topics(path: str | Path | None = None) -> list[TopicSpec]:
    """Topic specs from a JSON file, or the bundled default set."""
    if path is None:
        raw = resources.files("newsloom").joinpath("data/topics.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    specs = json.loads(raw)
    return [TopicSpec(name=s["name"], keywords=frozenset(s["keywords"])) for s in specs]


def _capitalized_spans(text: str) -> Counter[str]:
    """Runs of >=2 capitalized words, joined lowercase with underscores.

    A word carrying a trailing sentence terminator still joins its span but
    ends it, so spans never cross sentence boundaries.
    """
    spans: Counter[str] = Counter()
    run: list[str] = []

    def flush() -> None:
        if len(run) >= 2:
            spans["_".join(run)] += 1
        run.clear()

    for chunk in _WORD_SPLIT.findall(text):
        word = chunk.strip(PUNCT_CHARS)
        if word and word[0].isupper():
            run.append(word.lower())
            if chunk[-1] in _SPAN_BREAK:
                flush()
        else:
            flush()
    flush()
    return spans


def extract_tags(
    article,
    idf_table: IdfTable,
    k: int = DEFAULT_TAG_COUNT,
    stopwords: frozenset[str] | None = None,
) -> TagSet:
    """Top-k TF-IDF tokens plus capitalized-span entity tags.

    Entity scores are span frequency times the maximum component idf.
    """
    if k < 1:
        raise TaggingError("k must be >= 1")
    if stopwords is None:
        stopwords = load_stopwords()
    punct = set(PUNCT_CHARS)

    tf = Counter(
        t
        for t in tokenize(article.body)
        if t not in stopwords and t != EOP and not all(c in punct for c in t)
    )
    scored = [(word, count * idf_table.idf_of(word)) for word, count in tf.items()]
    scored.sort(key=lambda ws: (-ws[1], ws[0]))
    tags = dict(scored[:k])

    for span, freq in _capitalized_spans(article.body).items():
        score = freq * max(idf_table.idf_of(w) for w in span.split("_"))
        if span not in tags or score > tags[span]:
            tags[span] = score

    ordered = sorted(tags.items(), key=lambda ts: (-ts[1], ts[0]))
    return TagSet(article_id=article.id, tags=ordered)


def match_topics(tags: TagSet | Iterable[str], specs: Sequence[TopicSpec]) -> list[str]:
    """Names of every topic whose keyword set intersects the tags, sorted."""
    if not specs:
        raise TaggingError("specs must be non-empty")
    names = set(tags.names()) if isinstance(tags, TagSet) else set(tags)
    return sorted(spec.name for spec in specs if names & spec.keywords)


def build_subsets(
    store: CorpusStore, specs: Sequence[TopicSpec]
) -> list[tuple[TopicSubset, CorpusStats]]:
    """Materialize per-topic article id lists with per-subset stats.

    Every article must already carry tags (tags == None means untagged).
    """
    members: dict[str, list[str]] = {spec.name: [] for spec in specs}
    word_counts: dict[str, int] = {spec.name: 0 for spec in specs}
    topics_by_id: dict[str, list[str]] = {}
    for article in store:
        if article.tags is None:
            raise TaggingError(
                f"article {article.id!r} has no tags; run extract_tags over the store first"
            )
        matched = match_topics(article.tags, specs)
        topics_by_id[article.id] = matched
        for name in matched:
            members[name].append(article.id)
            word_counts[name] += len(article.body.split())
    store.apply_topics(topics_by_id)
    return [
        (
            TopicSubset(topic=spec.name, article_ids=members[spec.name]),
            CorpusStats(len(members[spec.name]), word_counts[spec.name]),
        )
        for spec in specs
    ]


def write_tag_sidecar(path: str | Path, tagsets: Iterable[TagSet]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ts in tagsets:
            record = {
                "article_id": ts.article_id,
                "tags": [{"tag": t, "score": s} for t, s in ts.tags],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_tag_sidecar(path: str | Path) -> dict[str, TagSet]:
    out: dict[str, TagSet] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            out[record["article_id"]] = TagSet(
                article_id=record["article_id"],
                tags=[(t["tag"], t["score"]) for t in record["tags"]],
            )
    return out


def tag_store(store: CorpusStore, k: int = DEFAULT_TAG_COUNT) -> list[TagSet]:
    """Extract tags for every article and attach them to the store.

    Articles that came in with explicit tags keep them; a TagSet with unit
    scores is synthesized so the sidecar stays complete.
    """
    idf_table = IdfTable.build(store)
    stopwords = load_stopwords()
    tagsets: list[TagSet] = []
    tags_by_id: dict[str, list[str]] = {}
    for article in store:
        if article.tags is not None:
            ts = TagSet(article.id, [(t, 1.0) for t in article.tags])
        else:
            ts = extract_tags(article, idf_table, k=k, stopwords=stopwords)
        tagsets.append(ts)
        tags_by_id[article.id] = ts.names()
    store.apply_tags(tags_by_id)
    return tagsets
