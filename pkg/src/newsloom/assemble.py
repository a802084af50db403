"""Article assembly under single-edit rules.

Articles are built from a pool of kept sentences. A manifest records,
per sentence, which single edit (if any) the editor applied. Excerpt
sentences may each carry at most one character-level or word-level
deletion/substitution; body sentences must be verbatim (drops allowed);
the title must be a contiguous token run found in the pool. Validators
return structured verdicts so a UI can surface violations in place.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from .corpus import PUNCT_CHARS

__all__ = [
    "AssembleError",
    "EditOp",
    "Violation",
    "EditVerdict",
    "ManifestEntry",
    "ImageRef",
    "ArticleManifest",
    "PoolSentence",
    "SentencePool",
    "AssembledArticle",
    "split_words",
    "word_spans",
    "apply_edit",
    "validate_sentence_edit",
    "validate_excerpt",
    "validate_body",
    "validate_title",
    "manifest_verdicts",
    "excerpt_word_count",
    "render_article",
]

EDIT_KINDS = (
    "none",
    "delete_char",
    "replace_char",
    "delete_word",
    "replace_word",
    "drop_sentence",
    "reorder",
)
TEXT_EDIT_KINDS = frozenset({"delete_char", "replace_char", "delete_word", "replace_word"})
BODY_KINDS = frozenset({"none", "drop_sentence"})
STATUSES = ("draft", "validated", "published")

EXCERPT_MIN_WORDS = 50
EXCERPT_MAX_WORDS = 100

_WORD_RE = re.compile(r"[.,!?;:\"()']|[^.,!?;:\"()']+")
_CHUNK_RE = re.compile(r"\S+")
_PUNCT = set(PUNCT_CHARS)


class AssembleError(Exception):
    """Malformed manifest, edit, or pool input."""


def word_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of each token, punctuation marks standing alone."""
    spans: list[tuple[int, int]] = []
    for chunk in _CHUNK_RE.finditer(text):
        base = chunk.start()
        for piece in _WORD_RE.finditer(chunk.group()):
            spans.append((base + piece.start(), base + piece.end()))
    return spans


def split_words(text: str) -> list[str]:
    """Case-preserving token split; same boundaries the edit rules use."""
    return [text[s:e] for s, e in word_spans(text)]


@dataclass(frozen=True)
class EditOp:
    """One editor intervention on a pool sentence.

    position indexes characters for char-level kinds and tokens (as
    produced by split_words) for word-level kinds. reorder marks an
    intentional position change and carries no text change.
    """

    kind: str
    position: int | None = None
    replacement: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in EDIT_KINDS:
            raise AssembleError(f"unknown edit kind {self.kind!r}")
        positional = self.kind in TEXT_EDIT_KINDS
        if positional:
            if self.position is None or self.position < 0:
                raise AssembleError(f"{self.kind} requires a non-negative position")
        elif self.position is not None or self.replacement is not None:
            raise AssembleError(f"{self.kind} carries no position or replacement")
        if self.kind in ("replace_char", "replace_word"):
            # Replacement shape is deliberately unconstrained here: whether
            # the spliced result stays within the single-edit rule is the
            # validator's call, so oversized replacements surface as rule
            # violations rather than parse errors.
            if not self.replacement:
                raise AssembleError(f"{self.kind} requires a replacement")
        elif positional and self.replacement is not None:
            raise AssembleError(f"{self.kind} carries no replacement")

    @property
    def edits_text(self) -> bool:
        return self.kind in TEXT_EDIT_KINDS

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.position is not None:
            out["position"] = self.position
        if self.replacement is not None:
            out["replacement"] = self.replacement
        return out

    @classmethod
    def from_json(cls, record: dict) -> "EditOp":
        if not isinstance(record, dict) or "kind" not in record:
            raise AssembleError("edit op must be an object with a 'kind' field")
        position = record.get("position")
        if position is not None and not isinstance(position, int):
            raise AssembleError("edit op position must be an integer")
        replacement = record.get("replacement")
        if replacement is not None and not isinstance(replacement, str):
            raise AssembleError("edit op replacement must be a string")
        return cls(kind=record["kind"], position=position, replacement=replacement)


def apply_edit(original: str, op: EditOp) -> str:
    """Apply op to original, returning the edited sentence text.

    Raises AssembleError when the op does not fit the sentence (position
    out of range) or names a dropped sentence, which renders nothing.
    """
    if op.kind in ("none", "reorder"):
        return original
    if op.kind == "drop_sentence":
        raise AssembleError("dropped sentences render no text")
    if op.kind in ("delete_char", "replace_char"):
        if op.position >= len(original):
            raise AssembleError(
                f"character position {op.position} out of range for a "
                f"{len(original)}-character sentence"
            )
        if op.kind == "delete_char":
            return original[: op.position] + original[op.position + 1 :]
        return original[: op.position] + op.replacement + original[op.position + 1 :]
    spans = word_spans(original)
    if op.position >= len(spans):
        raise AssembleError(
            f"word position {op.position} out of range for a {len(spans)}-token sentence"
        )
    start, end = spans[op.position]
    if op.kind == "replace_word":
        # Keep token boundaries intact at both seams: replacing a flush
        # punctuation mark with a word must not merge it into a neighbor.
        left, right = original[:start], original[end:]
        repl = op.replacement
        if left and not left[-1].isspace() and left[-1] not in _PUNCT and repl[0] not in _PUNCT:
            repl = " " + repl
        if right and not right[0].isspace() and right[0] not in _PUNCT and repl[-1] not in _PUNCT:
            repl = repl + " "
        return left + repl + right
    # delete_word: join the two sides, avoiding doubled spaces and avoiding
    # gluing two word tokens into one. A punctuation char on either side of
    # the seam keeps tokens apart, so only then is the space dropped.
    left = original[:start].rstrip()
    right = original[end:].lstrip()
    if not left:
        return right
    if not right:
        return left
    if left[-1] in _PUNCT or right[0] in _PUNCT:
        return left + right
    return left + " " + right


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    where: str = ""

    def to_json(self) -> dict:
        return {"rule": self.rule, "message": self.message, "where": self.where}

    @classmethod
    def from_json(cls, record: dict) -> "Violation":
        return cls(record["rule"], record["message"], record.get("where", ""))


@dataclass(frozen=True)
class EditVerdict:
    violations: tuple[Violation, ...] = ()

    @property
    def valid(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"valid": self.valid, "violations": [v.to_json() for v in self.violations]}

    @classmethod
    def from_json(cls, record: dict) -> "EditVerdict":
        return cls(tuple(Violation.from_json(v) for v in record.get("violations", [])))


def _one_item_edit(a: Sequence, b: Sequence) -> bool:
    """True iff b is a with exactly one item deleted or substituted."""
    if len(b) == len(a) - 1:
        i = 0
        while i < len(b) and a[i] == b[i]:
            i += 1
        return a[i + 1 :] == b[i:]
    if len(b) == len(a) and len(a) > 0:
        return sum(x != y for x, y in zip(a, b)) == 1
    return False


def validate_sentence_edit(original: str, edited: str) -> EditVerdict:
    """Check that edited differs from original by at most one allowed edit.

    Allowed: identical text, one character deleted or substituted, or one
    word (token) deleted or substituted. Insertions always fail. Word
    comparison is over case-preserving tokens, so two character changes
    confined to one word count as a single word substitution.
    """
    if edited == original:
        return EditVerdict()
    if _one_item_edit(original, edited):
        return EditVerdict()
    if _one_item_edit(split_words(original), split_words(edited)):
        return EditVerdict()
    return EditVerdict(
        (
            Violation(
                "single_edit",
                "sentence differs from its source by more than one character or "
                "word deletion/substitution",
                "sentence",
            ),
        )
    )


@dataclass(frozen=True)
class ManifestEntry:
    sentence_id: str
    op: EditOp = field(default_factory=lambda: EditOp("none"))

    def to_json(self) -> dict:
        return {"sentence_id": self.sentence_id, "op": self.op.to_json()}

    @classmethod
    def from_json(cls, record: dict) -> "ManifestEntry":
        if not isinstance(record, dict) or "sentence_id" not in record:
            raise AssembleError("manifest entry must be an object with 'sentence_id'")
        sid = record["sentence_id"]
        if not isinstance(sid, str) or not sid:
            raise AssembleError("sentence_id must be a non-empty string")
        op = EditOp.from_json(record["op"]) if "op" in record else EditOp("none")
        return cls(sentence_id=sid, op=op)


@dataclass(frozen=True)
class ImageRef:
    url: str
    author: str
    work_title: str

    def credit_line(self) -> str:
        return f"Image: {self.work_title} by {self.author}, via Creative Commons"

    def to_json(self) -> dict:
        return {"url": self.url, "author": self.author, "work_title": self.work_title}

    @classmethod
    def from_json(cls, record: dict) -> "ImageRef":
        for key in ("url", "author", "work_title"):
            if not isinstance(record.get(key), str) or not record[key]:
                raise AssembleError(f"image requires a non-empty {key!r}")
        return cls(record["url"], record["author"], record["work_title"])


@dataclass
class ArticleManifest:
    id: str
    topic: str
    title: str = ""
    excerpt: list[ManifestEntry] = field(default_factory=list)
    body: list[ManifestEntry] = field(default_factory=list)
    image: ImageRef | None = None
    status: str = "draft"

    def __post_init__(self) -> None:
        if not self.id:
            raise AssembleError("manifest id must be non-empty")
        if not self.topic:
            raise AssembleError("manifest topic must be non-empty")
        if self.status not in STATUSES:
            raise AssembleError(f"unknown status {self.status!r}")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "topic": self.topic,
            "title": self.title,
            "excerpt": [e.to_json() for e in self.excerpt],
            "body": [e.to_json() for e in self.body],
            "image": self.image.to_json() if self.image else None,
            "status": self.status,
        }

    @classmethod
    def from_json(cls, record: dict) -> "ArticleManifest":
        if not isinstance(record, dict):
            raise AssembleError("manifest must be a JSON object")
        for key in ("id", "topic"):
            if not isinstance(record.get(key), str):
                raise AssembleError(f"manifest requires a string {key!r}")
        title = record.get("title", "")
        if not isinstance(title, str):
            raise AssembleError("manifest title must be a string")
        sections: dict[str, list[ManifestEntry]] = {}
        for section in ("excerpt", "body"):
            raw = record.get(section, [])
            if not isinstance(raw, list):
                raise AssembleError(f"manifest {section} must be an array")
            sections[section] = [ManifestEntry.from_json(e) for e in raw]
        image = record.get("image")
        return cls(
            id=record["id"],
            topic=record["topic"],
            title=title,
            excerpt=sections["excerpt"],
            body=sections["body"],
            image=ImageRef.from_json(image) if image else None,
            status=record.get("status", "draft"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ArticleManifest":
        try:
            record = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise AssembleError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(record)


@dataclass(frozen=True)
class PoolSentence:
    """A kept sentence plus the novelty metadata an editor sees."""

    sid: str
    text: str
    distance: int | None = None
    dissimilarity: float | None = None
    closest: str | None = None

    def to_json(self) -> dict:
        return {
            "sid": self.sid,
            "text": self.text,
            "distance": self.distance,
            "dissimilarity": self.dissimilarity,
            "closest": self.closest,
        }

    @classmethod
    def from_json(cls, record: dict) -> "PoolSentence":
        return cls(
            sid=record["sid"],
            text=record["text"],
            distance=record.get("distance"),
            dissimilarity=record.get("dissimilarity"),
            closest=record.get("closest"),
        )


class SentencePool:
    """Ordered kept sentences for one topic, addressable by id."""

    def __init__(self, topic: str, sentences: Sequence[PoolSentence]):
        if not topic:
            raise AssembleError("pool topic must be non-empty")
        self.topic = topic
        self.sentences = list(sentences)
        self._by_id: dict[str, PoolSentence] = {}
        for s in self.sentences:
            if s.sid in self._by_id:
                raise AssembleError(f"duplicate sentence id {s.sid!r} in pool")
            if not s.text.strip():
                raise AssembleError(f"pool sentence {s.sid!r} has empty text")
            self._by_id[s.sid] = s

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[PoolSentence]:
        return iter(self.sentences)

    def __contains__(self, sid: str) -> bool:
        return sid in self._by_id

    def get(self, sid: str) -> PoolSentence:
        if sid not in self._by_id:
            raise AssembleError(f"unknown sentence id {sid!r}")
        return self._by_id[sid]

    @classmethod
    def from_reports(cls, topic: str, reports, corpus_index=None) -> "SentencePool":
        """Build a pool from novelty reports, keeping only 'keep' verdicts.

        Sentence ids are '<sample>.<index>'. When a corpus index is given,
        the closest-match text is resolved for display.
        """
        kept: list[PoolSentence] = []
        for r in reports:
            if r.verdict != "keep":
                continue
            closest = None
            if r.closest_match is not None and corpus_index is not None:
                closest = corpus_index.sentences[r.closest_match].text
            kept.append(
                PoolSentence(
                    sid=f"{r.sentence.parent_id}.{r.sentence.index}",
                    text=r.sentence.text,
                    distance=r.distance,
                    dissimilarity=r.dissimilarity,
                    closest=closest,
                )
            )
        return cls(topic, kept)

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for s in self.sentences:
                fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path, topic: str | None = None) -> "SentencePool":
        path = Path(path)
        if topic is None:
            topic = path.name.split(".")[0]
        sentences = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    sentences.append(PoolSentence.from_json(json.loads(line)))
        return cls(topic, sentences)


def _entry_checks(
    entries: Sequence[ManifestEntry],
    pool: SentencePool,
    section: str,
    allowed_kinds: frozenset[str] | None = None,
) -> tuple[list[Violation], list[tuple[ManifestEntry, str]]]:
    """Shared reference/application checks; returns violations and the
    successfully rendered (entry, text) pairs with drops omitted."""
    violations: list[Violation] = []
    rendered: list[tuple[ManifestEntry, str]] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        where = f"{section}[{i}]"
        if allowed_kinds is not None and entry.op.kind not in allowed_kinds:
            violations.append(
                Violation(
                    "body_edit",
                    f"body sentences must be verbatim; {entry.op.kind} is not allowed",
                    where,
                )
            )
            continue
        if entry.sentence_id in seen:
            violations.append(
                Violation(
                    "duplicate_sentence",
                    f"sentence {entry.sentence_id!r} appears more than once in the {section}",
                    where,
                )
            )
            continue
        seen.add(entry.sentence_id)
        if entry.sentence_id not in pool:
            violations.append(
                Violation(
                    "unknown_sentence",
                    f"sentence {entry.sentence_id!r} is not in the kept pool",
                    where,
                )
            )
            continue
        if entry.op.kind == "drop_sentence":
            continue
        original = pool.get(entry.sentence_id).text
        try:
            edited = apply_edit(original, entry.op)
        except AssembleError as exc:
            violations.append(Violation("op_invalid", str(exc), where))
            continue
        verdict = validate_sentence_edit(original, edited)
        if not verdict.valid:
            violations.append(Violation("single_edit", verdict.violations[0].message, where))
        # A rule-violating but applicable edit still has text: keep it so
        # word counting reflects what the editor sees and the rule breach
        # surfaces as exactly one violation at that sentence.
        rendered.append((entry, edited))
    return violations, rendered


def excerpt_word_count(manifest: ArticleManifest, pool: SentencePool) -> int:
    """Whitespace-word count of the rendered excerpt, drops excluded."""
    _, rendered = _entry_checks(manifest.excerpt, pool, "excerpt")
    return sum(len(text.split()) for _, text in rendered)


def validate_excerpt(manifest: ArticleManifest, pool: SentencePool) -> EditVerdict:
    """Excerpt rule: single edits only and 50-100 rendered words."""
    violations, rendered = _entry_checks(manifest.excerpt, pool, "excerpt")
    if not rendered and not violations:
        violations.append(Violation("empty_excerpt", "excerpt has no sentences", "excerpt"))
    elif rendered:
        words = sum(len(text.split()) for _, text in rendered)
        if not EXCERPT_MIN_WORDS <= words <= EXCERPT_MAX_WORDS:
            violations.append(
                Violation(
                    "word_count",
                    f"excerpt has {words} words; allowed range is "
                    f"{EXCERPT_MIN_WORDS}-{EXCERPT_MAX_WORDS}",
                    "excerpt",
                )
            )
    return EditVerdict(tuple(violations))


def validate_body(manifest: ArticleManifest, pool: SentencePool) -> EditVerdict:
    """Body rule: verbatim pool sentences only; drops and reordering free."""
    violations, rendered = _entry_checks(manifest.body, pool, "body", BODY_KINDS)
    if not rendered and not violations:
        violations.append(Violation("empty_body", "body has no sentences", "body"))
    return EditVerdict(tuple(violations))


def _strip_punct_tokens(tokens: list[str]) -> list[str]:
    lo, hi = 0, len(tokens)
    while lo < hi and tokens[lo] in _PUNCT:
        lo += 1
    while hi > lo and tokens[hi - 1] in _PUNCT:
        hi -= 1
    return tokens[lo:hi]


def validate_title(manifest: ArticleManifest, pool: SentencePool) -> EditVerdict:
    """Title rule: a contiguous token run of some pool sentence.

    Comparison is case-insensitive and ignores punctuation at the title's
    edges; interior punctuation must match the source.
    """
    tokens = _strip_punct_tokens([t.lower() for t in split_words(manifest.title)])
    if not tokens:
        return EditVerdict(
            (Violation("empty_title", "title has no words", "title"),)
        )
    n = len(tokens)
    for sentence in pool:
        hay = [t.lower() for t in split_words(sentence.text)]
        if any(hay[i : i + n] == tokens for i in range(len(hay) - n + 1)):
            return EditVerdict()
    return EditVerdict(
        (
            Violation(
                "title_source",
                "title is not a contiguous token run of any kept-pool sentence",
                "title",
            ),
        )
    )


def manifest_verdicts(manifest: ArticleManifest, pool: SentencePool) -> dict[str, EditVerdict]:
    """All three section verdicts keyed 'title' / 'excerpt' / 'body'."""
    return {
        "title": validate_title(manifest, pool),
        "excerpt": validate_excerpt(manifest, pool),
        "body": validate_body(manifest, pool),
    }


@dataclass(frozen=True)
class ProvenanceRecord:
    section: str
    sentence_id: str
    op: EditOp
    text: str

    def to_json(self) -> dict:
        return {
            "section": self.section,
            "sentence_id": self.sentence_id,
            "op": self.op.to_json(),
            "text": self.text,
        }

    @classmethod
    def from_json(cls, record: dict) -> "ProvenanceRecord":
        return cls(
            section=record["section"],
            sentence_id=record["sentence_id"],
            op=EditOp.from_json(record["op"]),
            text=record["text"],
        )


@dataclass(frozen=True)
class AssembledArticle:
    """Rendered article: plain structured text plus per-sentence provenance."""

    manifest_id: str
    topic: str
    title: str
    excerpt: str
    body_paragraphs: tuple[str, ...]
    image: ImageRef | None
    provenance: tuple[ProvenanceRecord, ...]

    def plain_text(self) -> str:
        parts = [self.title, self.excerpt, *self.body_paragraphs]
        if self.image is not None:
            parts.append(self.image.credit_line())
        return "\n\n".join(parts) + "\n"

    def to_json(self) -> dict:
        return {
            "manifest_id": self.manifest_id,
            "topic": self.topic,
            "title": self.title,
            "excerpt": self.excerpt,
            "body_paragraphs": list(self.body_paragraphs),
            "image": self.image.to_json() if self.image else None,
            "provenance": [p.to_json() for p in self.provenance],
        }

    @classmethod
    def from_json(cls, record: dict) -> "AssembledArticle":
        image = record.get("image")
        return cls(
            manifest_id=record["manifest_id"],
            topic=record["topic"],
            title=record["title"],
            excerpt=record["excerpt"],
            body_paragraphs=tuple(record["body_paragraphs"]),
            image=ImageRef.from_json(image) if image else None,
            provenance=tuple(ProvenanceRecord.from_json(p) for p in record["provenance"]),
        )


def render_article(manifest: ArticleManifest, pool: SentencePool) -> AssembledArticle:
    """Render a manifest that passes all three validators.

    Excerpt sentences join into one block; each body sentence becomes its
    own paragraph. Dropped sentences stay in the provenance trail with
    empty text. Raises AssembleError listing every violation otherwise.
    """
    verdicts = manifest_verdicts(manifest, pool)
    problems = [v for verdict in verdicts.values() for v in verdict.violations]
    if problems:
        detail = "; ".join(f"{v.where or v.rule}: {v.message}" for v in problems)
        raise AssembleError(f"manifest {manifest.id!r} fails validation: {detail}")

    provenance: list[ProvenanceRecord] = []
    excerpt_texts: list[str] = []
    for entry in manifest.excerpt:
        if entry.op.kind == "drop_sentence":
            provenance.append(ProvenanceRecord("excerpt", entry.sentence_id, entry.op, ""))
            continue
        text = apply_edit(pool.get(entry.sentence_id).text, entry.op)
        excerpt_texts.append(text)
        provenance.append(ProvenanceRecord("excerpt", entry.sentence_id, entry.op, text))
    paragraphs: list[str] = []
    for entry in manifest.body:
        if entry.op.kind == "drop_sentence":
            provenance.append(ProvenanceRecord("body", entry.sentence_id, entry.op, ""))
            continue
        text = pool.get(entry.sentence_id).text
        paragraphs.append(text)
        provenance.append(ProvenanceRecord("body", entry.sentence_id, entry.op, text))

    return AssembledArticle(
        manifest_id=manifest.id,
        topic=manifest.topic,
        title=manifest.title,
        excerpt=" ".join(excerpt_texts),
        body_paragraphs=tuple(paragraphs),
        image=manifest.image,
        provenance=tuple(provenance),
    )
