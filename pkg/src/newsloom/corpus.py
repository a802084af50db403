"""Corpus ingestion, tokenization, vocabulary building and stats.

The store is an append-only JSONL file (one article object per line) plus an
in-memory id index. Tokenization is deterministic: lowercase, whitespace
split, the punctuation characters .,!?;:"()' split into standalone tokens,
and blank lines become a paragraph-break token.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

UNK, BOS, EOS, EOP = "<unk>", "<s>", "</s>", "<p>"
UNK_ID, BOS_ID, EOS_ID, EOP_ID = 0, 1, 2, 3
SPECIALS = {UNK: UNK_ID, BOS: BOS_ID, EOS: EOS_ID, EOP: EOP_ID}
NUM_SPECIALS = len(SPECIALS)

PUNCT_CHARS = ".,!?;:\"()'"
_PIECE_RE = re.compile(r"[.,!?;:\"()']|[^.,!?;:\"()']+")
_PARA_RE = re.compile(r"\n[ \t\r]*\n+")

DEFAULT_MIN_COUNT = 3
DEFAULT_MAX_SIZE = 20_000


class CorpusError(Exception):
    """Malformed input while ingesting a corpus."""


class DuplicateArticleError(CorpusError):
    """An article id was seen twice."""


@dataclass
class Article:
    id: str
    title: str
    body: str
    source: str = ""
    tags: list[str] | None = None
    topics: list[str] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("article id must be non-empty")
        if not self.body:
            raise CorpusError(f"article {self.id!r}: body must be non-empty")


@dataclass(frozen=True)
class CorpusStats:
    article_count: int
    word_count: int


@dataclass
class TokenSequence:
    ids: list[int]

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, TokenSequence):
            return self.ids == other.ids
        return NotImplemented


def tokenize(text: str) -> list[str]:
    """Split text into lowercase word/punctuation tokens.

    Blank lines separate paragraphs and are emitted as the <p> token.
    Total function; returns [] for empty or whitespace-only input.
    """
    tokens: list[str] = []
    for block in _PARA_RE.split(text):
        block_tokens: list[str] = []
        for chunk in block.lower().split():
            block_tokens.extend(_PIECE_RE.findall(chunk))
        if not block_tokens:
            continue
        if tokens:
            tokens.append(EOP)
        tokens.extend(block_tokens)
    return tokens


_NO_SPACE_BEFORE = set(".,!?;:)")
_NO_SPACE_AFTER = set("(")


def detokenize(tokens: Iterable[str]) -> str:
    """Render tokens back to display text.

    Inverse of tokenize up to whitespace: re-tokenizing the result yields the
    identical token list. <p> becomes a paragraph break; <s> and </s> are
    dropped; straight quotes alternate open/close.
    """
    out: list[str] = []
    glue_next = False
    quote_open = False
    for tok in tokens:
        if tok in (BOS, EOS):
            continue
        if tok == EOP:
            out.append("\n\n")
            glue_next = True  # no leading space after a paragraph break
            quote_open = False
            continue
        if not out:
            out.append(tok)
        elif tok in _NO_SPACE_BEFORE or glue_next or tok == "'":
            out.append(tok)
        elif tok == '"':
            out.append('"' if quote_open else ' "')
        else:
            out.append(" " + tok)
        glue_next = tok in _NO_SPACE_AFTER or tok == "'" or (tok == '"' and not quote_open)
        if tok == '"':
            quote_open = not quote_open
    return "".join(out)


def word_frequencies(texts: Iterable[str]) -> Counter[str]:
    """Token frequency table over texts, excluding special tokens."""
    counts: Counter[str] = Counter()
    for text in texts:
        counts.update(t for t in tokenize(text) if t not in SPECIALS)
    return counts


@dataclass
class Vocabulary:
    """Word/id bijection with fixed special ids 0..3.

    Non-special words occupy ids 4.. in descending frequency order (ties
    lexicographic). max_size caps the number of non-special words; the four
    specials are always present on top of it.
    """

    id_of: dict[str, int]
    word_of: list[str]
    min_count: int

    @classmethod
    def build(
        cls,
        counts: Counter[str],
        min_count: int = DEFAULT_MIN_COUNT,
        max_size: int = DEFAULT_MAX_SIZE,
    ) -> "Vocabulary":
        if min_count < 1:
            raise ValueError("min_count must be >= 1")
        kept = [(w, c) for w, c in counts.items() if c >= min_count and w not in SPECIALS]
        kept.sort(key=lambda wc: (-wc[1], wc[0]))
        words = [w for w, _ in kept[:max_size]]
        word_of = [UNK, BOS, EOS, EOP] + words
        id_of = {w: i for i, w in enumerate(word_of)}
        return cls(id_of=id_of, word_of=word_of, min_count=min_count)

    def __len__(self) -> int:
        return len(self.word_of)

    @property
    def size(self) -> int:
        return len(self.word_of)

    def encode(self, tokens: Iterable[str]) -> TokenSequence:
        unk = UNK_ID
        return TokenSequence([self.id_of.get(t, unk) for t in tokens])

    def encode_text(self, text: str) -> TokenSequence:
        return self.encode(tokenize(text))

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.word_of[i] for i in ids]

    def decode_text(self, ids: Iterable[int]) -> str:
        return detokenize(self.decode(ids))

    def save(self, path: str | Path) -> None:
        payload = {
            "specials": dict(SPECIALS),
            "min_count": self.min_count,
            "words": self.word_of[NUM_SPECIALS:],
        }
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("specials") != dict(SPECIALS):
            raise CorpusError(f"{path}: unexpected specials table")
        word_of = [UNK, BOS, EOS, EOP] + list(payload["words"])
        id_of = {w: i for i, w in enumerate(word_of)}
        return cls(id_of=id_of, word_of=word_of, min_count=int(payload.get("min_count", 1)))


def _article_from_record(record: dict, where: str) -> Article:
    for key in ("id", "title", "body"):
        if key not in record:
            raise CorpusError(f"{where}: missing field {key!r}")
        if not isinstance(record[key], str):
            raise CorpusError(f"{where}: field {key!r} must be a string")
    tags = record.get("tags")
    if tags is not None and not isinstance(tags, list):
        raise CorpusError(f"{where}: field 'tags' must be an array")
    return Article(
        id=record["id"],
        title=record["title"],
        body=record["body"],
        source=record.get("source", ""),
        tags=[str(t).lower() for t in tags] if tags is not None else None,
        topics=record.get("topics"),
    )


class CorpusStore:
    """Append-only article store backed by one JSONL file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._articles: dict[str, Article] = {}
        self._word_count = 0
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{self.path}:{lineno}: invalid JSON: {exc}") from exc
                article = _article_from_record(record, f"{self.path}:{lineno}")
                if article.id in self._articles:
                    raise DuplicateArticleError(
                        f"{self.path}:{lineno}: duplicate article id {article.id!r}"
                    )
                self._articles[article.id] = article
                self._word_count += len(article.body.split())

    def ingest(self, source: str | Path, fmt: str = "jsonl") -> CorpusStats:
        """Append articles from source; returns stats over the ingested batch."""
        source = Path(source)
        if not source.exists():
            raise CorpusError(f"no such corpus source: {source}")
        if fmt == "jsonl":
            batch = self._read_jsonl(source)
        elif fmt == "plain_dir":
            batch = self._read_plain_dir(source)
        else:
            raise CorpusError(f"unknown corpus format {fmt!r}")

        added = 0
        words = 0
        with self.path.open("a", encoding="utf-8") as fh:
            for article in batch:
                if article.id in self._articles:
                    raise DuplicateArticleError(f"duplicate article id {article.id!r}")
                fh.write(json.dumps(_article_record(article), ensure_ascii=False) + "\n")
                self._articles[article.id] = article
                added += 1
                n = len(article.body.split())
                words += n
                self._word_count += n
        return CorpusStats(article_count=added, word_count=words)

    def _read_jsonl(self, source: Path) -> list[Article]:
        batch: list[Article] = []
        seen: set[str] = set()
        with source.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{source}:{lineno}: invalid JSON: {exc}") from exc
                article = _article_from_record(record, f"{source}:{lineno}")
                if article.id in seen:
                    raise DuplicateArticleError(
                        f"{source}:{lineno}: duplicate article id {article.id!r}"
                    )
                seen.add(article.id)
                batch.append(article)
        return batch

    def _read_plain_dir(self, source: Path) -> list[Article]:
        batch: list[Article] = []
        for path in sorted(source.glob("*.txt")):
            body = path.read_text(encoding="utf-8")
            if not body.strip():
                raise CorpusError(f"{path}: empty article body")
            first_line = next((ln.strip() for ln in body.splitlines() if ln.strip()), path.stem)
            batch.append(
                Article(id=path.stem, title=first_line, body=body, source=source.name)
            )
        return batch

    def stats(self) -> CorpusStats:
        return CorpusStats(article_count=len(self._articles), word_count=self._word_count)

    def get(self, article_id: str) -> Article:
        return self._articles[article_id]

    def __contains__(self, article_id: str) -> bool:
        return article_id in self._articles

    def __len__(self) -> int:
        return len(self._articles)

    def __iter__(self) -> Iterator[Article]:
        return iter(self._articles.values())

    def article_ids(self) -> list[str]:
        return list(self._articles.keys())

    def apply_tags(self, tags_by_id: dict[str, list[str]]) -> None:
        """Attach extracted tags (in memory; persistence is the tag sidecar)."""
        for article_id, tags in tags_by_id.items():
            self._articles[article_id].tags = list(tags)

    def apply_topics(self, topics_by_id: dict[str, list[str]]) -> None:
        for article_id, topics in topics_by_id.items():
            self._articles[article_id].topics = list(topics)


def _article_record(article: Article) -> dict:
    record = {
        "id": article.id,
        "title": article.title,
        "body": article.body,
        "source": article.source,
    }
    if article.tags is not None:
        record["tags"] = article.tags
    if article.topics is not None:
        record["topics"] = article.topics
    return record


def build_vocab(
    store: CorpusStore,
    min_count: int = DEFAULT_MIN_COUNT,
    max_size: int = DEFAULT_MAX_SIZE,
) -> Vocabulary:
    """Vocabulary over every article body in the store."""
    if len(store) == 0:
        raise CorpusError("cannot build a vocabulary from an empty store")
    counts = word_frequencies(a.body for a in store)
    return Vocabulary.build(counts, min_count=min_count, max_size=max_size)
