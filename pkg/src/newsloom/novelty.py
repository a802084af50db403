"""Novelty filtering: reject generated sentences that sit too close to the
source corpus under character-level Levenshtein distance.

A sentence is kept only when its dissimilarity to every corpus sentence is
strictly greater than the threshold, where dissimilarity is
distance / max(len(a), len(b)) over Unicode scalar values. Threshold
comparisons run on exact integers (cross-multiplied fractions) so the
boundary case is never subject to float rounding.

The hot kernels are numba-compiled over int32 codepoint arrays. The scan
per generated sentence visits corpus sentences in ascending
(length-difference, id) order, keeps a shrinking distance budget, and
prunes with the length bound and a bucketed bag-of-characters lower bound
before any DP runs.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .corpus import CorpusStore
from .decode import GeneratedSample

HIST_BUCKETS = 64
DEFAULT_THRESHOLD = 0.30


class NoveltyError(Exception):
    pass


@dataclass(frozen=True)
class Sentence:
    text: str
    origin: str  # "corpus" | "generated"
    parent_id: str
    index: int

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise NoveltyError("sentence text must be non-empty after trimming")
        if self.origin not in ("corpus", "generated"):
            raise NoveltyError(f"origin must be corpus or generated, got {self.origin!r}")

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "origin": self.origin,
            "parent_id": self.parent_id,
            "index": self.index,
        }


@dataclass
class NoveltyReport:
    sentence: Sentence
    closest_match: int | None
    distance: int | None
    dissimilarity: float | None
    verdict: str  # "keep" | "reject"

    def to_json(self) -> dict:
        return {
            "sentence": self.sentence.to_json(),
            "closest_match": self.closest_match,
            "distance": self.distance,
            "dissimilarity": self.dissimilarity,
            "verdict": self.verdict,
        }


_TERMINATOR_RE = re.compile(r"[.!?]+(?=\s|$)")
_TAIL_WORD_RE = re.compile(r"[^\s]+$")


def load_abbreviations() -> frozenset[str]:
    from importlib import resources

    text = resources.files("newsloom").joinpath("data/abbreviations.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


_ABBREVIATIONS: frozenset[str] | None = None


def _abbreviations() -> frozenset[str]:
    global _ABBREVIATIONS
    if _ABBREVIATIONS is None:
        _ABBREVIATIONS = load_abbreviations()
    return _ABBREVIATIONS


def split_sentences(text: str, origin: str = "corpus", parent_id: str = "", abbreviations=None):
    """Split on ./!/? followed by whitespace or end, keeping the terminator.

    A lone period does not split when the word it ends is a known
    abbreviation (mr., u.s., ...). Segments are trimmed; empty ones drop.
    """
    abbrevs = _abbreviations() if abbreviations is None else abbreviations
    pieces: list[str] = []
    start = 0
    for m in _TERMINATOR_RE.finditer(text):
        if m.group() == ".":
            before = _TAIL_WORD_RE.search(text, start, m.start())
            if before is not None:
                word = before.group().lstrip("\"'()")
                if word.lower() in abbrevs:
                    continue
        pieces.append(text[start : m.end()])
        start = m.end()
    if start < len(text):
        pieces.append(text[start:])
    out: list[Sentence] = []
    for piece in pieces:
        normalized = " ".join(piece.split())  # collapse line wraps and runs
        if normalized:
            out.append(
                Sentence(text=normalized, origin=origin, parent_id=parent_id, index=len(out))
            )
    return out


def _encode(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-32-le"), dtype="<i4").astype(np.int32)


def _histogram(codes: np.ndarray) -> np.ndarray:
    return np.bincount(codes & (HIST_BUCKETS - 1), minlength=HIST_BUCKETS).astype(np.int32)


@njit(cache=True, nogil=True)
def _lev_banded(a, b, cutoff):
    """Exact Levenshtein distance if <= cutoff, else -1.

    Computes only the width-(2*cutoff+1) diagonal band: any alignment path
    leaving the band needs more than cutoff edits. Short-circuits on the
    length-difference lower bound and on a band row whose minimum already
    exceeds the cutoff.
    """
    la, lb = a.size, b.size
    if la > lb:
        a, b = b, a
        la, lb = lb, la
    if lb - la > cutoff:
        return -1
    if cutoff < 0:
        return -1
    inf = cutoff + 1
    prev = np.empty(lb + 1, dtype=np.int64)
    cur = np.empty(lb + 1, dtype=np.int64)
    top = min(lb, cutoff)
    for j in range(top + 1):
        prev[j] = j
    if top + 1 <= lb:
        prev[top + 1] = inf
    for i in range(1, la + 1):
        lo = i - cutoff
        if lo < 1:
            lo = 1
        hi = i + cutoff
        if hi > lb:
            hi = lb
        cur[lo - 1] = i if lo == 1 and i <= cutoff else inf
        rowmin = inf
        ai = a[i - 1]
        for j in range(lo, hi + 1):
            cost = 0 if ai == b[j - 1] else 1
            best = prev[j - 1] + cost
            alt = prev[j] + 1
            if alt < best:
                best = alt
            alt = cur[j - 1] + 1
            if alt < best:
                best = alt
            cur[j] = best
            if best < rowmin:
                rowmin = best
        if rowmin > cutoff:
            return -1
        if hi + 1 <= lb:
            cur[hi + 1] = inf
        prev, cur = cur, prev
    d = prev[lb]
    return d if d <= cutoff else -1


@njit(cache=True, nogil=True)
def _bag_bound(qh, ch):
    pos = 0
    neg = 0
    for b in range(qh.size):
        diff = qh[b] - ch[b]
        if diff > 0:
            pos += diff
        else:
            neg -= diff
    return pos if pos > neg else neg


@njit(cache=True, nogil=True)
def _scan_group_distance(q, qh, flat, starts, lens, hists, cands, best_d, best_id):
    """Distance-minimizing scan of one candidate group.

    Shrinking cutoff: only strictly-better distances are computed, so the
    first candidate (in visit order) at the final minimum wins ties.
    best_d == -1 means no best yet.
    """
    lq = q.size
    for k in range(cands.size):
        cid = cands[k]
        lc = lens[cid]
        cut = max(lq, lc) if best_d < 0 else best_d - 1
        ld = lq - lc if lq >= lc else lc - lq
        if ld > cut:
            continue
        if _bag_bound(qh, hists[cid]) > cut:
            continue
        d = _lev_banded(q, flat[starts[cid] : starts[cid] + lc], cut)
        if d < 0:
            continue
        if best_d < 0 or d < best_d:
            best_d = d
            best_id = cid
            if d == 0:
                return best_d, best_id
    return best_d, best_id


@njit(cache=True, nogil=True)
def _scan_group_dissim(
    q, qh, flat, starts, lens, hists, cands,
    best_d, best_m, best_id, thr_p, thr_q, use_witness,
):
    """Dissimilarity-minimizing scan of one candidate group.

    Tracks the running best as an exact fraction (best_d / best_m) via
    integer cross-multiplication; ties go to the lowest candidate id. With
    use_witness, returns immediately once any candidate's dissimilarity is
    <= thr_p/thr_q (early rejection); witness id is the fourth return.
    best_d == -1 means no best yet.
    """
    lq = q.size
    for k in range(cands.size):
        cid = cands[k]
        lc = lens[cid]
        m = lq if lq >= lc else lc
        if best_d < 0:
            cut = m
        else:
            # useful if d/m < best or d/m == best with smaller id
            cut = (best_d * m) // best_m
            if best_d * m % best_m == 0 and cid >= best_id:
                cut -= 1
        if use_witness:
            reject_cut = (thr_p * m) // thr_q
            if reject_cut > cut:
                cut = reject_cut
        ld = lq - lc if lq >= lc else lc - lq
        if ld > cut:
            continue
        if _bag_bound(qh, hists[cid]) > cut:
            continue
        d = _lev_banded(q, flat[starts[cid] : starts[cid] + lc], cut)
        if d < 0:
            continue
        if use_witness and d * thr_q <= thr_p * m:
            return best_d, best_m, best_id, d, cid
        better = False
        if best_d < 0 or d * best_m < best_d * m:
            better = True
        elif d * best_m == best_d * m and cid < best_id:
            better = True
        if better:
            best_d = d
            best_m = m
            best_id = cid
    return best_d, best_m, best_id, -1, -1


def levenshtein(a: str, b: str, cutoff: int | None = None) -> int | None:
    """Unit-cost edit distance; None when a cutoff is given and exceeded."""
    ca, cb = _encode(a), _encode(b)
    limit = max(ca.size, cb.size) if cutoff is None else int(cutoff)
    if limit < 0:
        raise NoveltyError("cutoff must be >= 0")
    d = int(_lev_banded(ca, cb, limit))
    if d < 0:
        return None
    return d


class CorpusIndex:
    """Immutable, deduplicated sentence index with precomputed codepoint
    buffers, lengths, and bucketed character histograms."""

    def __init__(self, sentences: Iterable[Sentence]):
        seen: dict[str, int] = {}
        self.sentences: list[Sentence] = []
        encoded: list[np.ndarray] = []
        for s in sentences:
            if s.text in seen:
                continue
            seen[s.text] = len(self.sentences)
            self.sentences.append(s)
            encoded.append(_encode(s.text))
        if not self.sentences:
            raise NoveltyError("corpus index is empty")
        self.lengths = np.array([e.size for e in encoded], dtype=np.int64)
        self.starts = np.zeros(len(encoded) + 1, dtype=np.int64)
        np.cumsum(self.lengths, out=self.starts[1:])
        self.flat = np.concatenate(encoded) if encoded else np.zeros(0, np.int32)
        self.hists = np.stack([_histogram(e) for e in encoded])
        order = np.lexsort((np.arange(len(encoded)), self.lengths))
        self._by_length: dict[int, np.ndarray] = {}
        sorted_lens = self.lengths[order]
        uniq, first = np.unique(sorted_lens, return_index=True)
        bounds = list(first) + [len(order)]
        for i, ln in enumerate(uniq):
            self._by_length[int(ln)] = order[bounds[i] : bounds[i + 1]].astype(np.int64)
        self.unique_lengths = uniq.astype(np.int64)

    def __len__(self) -> int:
        return len(self.sentences)

    @classmethod
    def from_store(cls, store: CorpusStore) -> "CorpusIndex":
        return cls(corpus_sentences(store))

    def visit_groups(self, qlen: int, max_diff: int | None = None):
        """Yield (length_diff, candidate ids) in ascending length-diff order.

        When both lengths qlen-d and qlen+d exist, their id arrays merge
        into one ascending-id group so visit order is exactly
        (length_diff, id)."""
        lengths = self.unique_lengths
        diffs = np.abs(lengths - qlen)
        for diff in np.unique(diffs):
            if max_diff is not None and diff > max_diff:
                break
            members = [self._by_length[int(ln)] for ln in lengths[diffs == diff]]
            cands = members[0] if len(members) == 1 else np.sort(np.concatenate(members))
            yield int(diff), cands


def corpus_sentences(store: CorpusStore) -> list[Sentence]:
    out: list[Sentence] = []
    for article in store:
        out.extend(split_sentences(article.body, origin="corpus", parent_id=article.id))
    return out


def closest_match(sentence: Sentence, index: CorpusIndex) -> tuple[int, int]:
    """(corpus sentence id, exact minimum distance) for one sentence.

    Visits candidates in ascending (length-diff, id) order with cutoff
    best-1; stops once the length difference alone rules out improvement.
    """
    if len(index) == 0:
        raise NoveltyError("corpus index is empty")
    q = _encode(sentence.text)
    qh = _histogram(q)
    best_d, best_id = np.int64(-1), np.int64(-1)
    for diff, cands in index.visit_groups(q.size):
        if best_d >= 0 and diff >= best_d:
            break
        best_d, best_id = _scan_group_distance(
            q, qh, index.flat, index.starts, index.lengths, index.hists,
            cands, best_d, best_id,
        )
        if best_d == 0:
            break
    return int(best_id), int(best_d)


def _threshold_fraction(threshold) -> Fraction:
    frac = Fraction(str(threshold)) if isinstance(threshold, float) else Fraction(threshold)
    if not 0 < frac < 1:
        raise NoveltyError(f"threshold must be in (0, 1), got {threshold!r}")
    return frac


def _scan_sentence(
    sentence: Sentence, index: CorpusIndex, thr: Fraction, exact: bool
) -> NoveltyReport:
    q = _encode(sentence.text)
    qh = _histogram(q)
    lq = q.size
    thr_p, thr_q = thr.numerator, thr.denominator
    best_d, best_m, best_id = np.int64(-1), np.int64(1), np.int64(-1)

    if exact:
        max_diff = None
    else:
        # beyond these length differences no candidate can reject the
        # sentence: min dissimilarity already exceeds the threshold
        low = (thr_p * lq) // thr_q
        high = (thr_p * lq) // (thr_q - thr_p)
        max_diff = max(low, high)

    witness: tuple[int, int] | None = None
    for diff, cands in index.visit_groups(lq, max_diff=max_diff):
        if exact and best_d >= 0:
            can_low = diff * best_m <= best_d * lq
            can_high = diff * best_m <= best_d * (lq + diff)
            if not (can_low or can_high):
                break
        best_d, best_m, best_id, wit_d, wit_id = _scan_group_dissim(
            q, qh, index.flat, index.starts, index.lengths, index.hists, cands,
            best_d, best_m, best_id, thr_p, thr_q, not exact,
        )
        if wit_id >= 0:
            witness = (int(wit_d), int(wit_id))
            break
        if best_d == 0:
            break

    if witness is not None:
        d, cid = witness
        m = max(lq, int(index.lengths[cid]))
        return NoveltyReport(sentence, cid, d, d / m, "reject")
    if best_d < 0:
        return NoveltyReport(sentence, None, None, None, "keep")
    d, m, cid = int(best_d), int(best_m), int(best_id)
    reject = d * thr_q <= thr_p * m
    return NoveltyReport(sentence, cid, d, d / m, "reject" if reject else "keep")


def pool_sentences(pool: Sequence[GeneratedSample]) -> list[Sentence]:
    out: list[Sentence] = []
    for i, sample in enumerate(pool):
        out.extend(split_sentences(sample.text, origin="generated", parent_id=str(i)))
    return out


def filter_sentences(
    sentences: Sequence[Sentence],
    index: CorpusIndex,
    threshold=DEFAULT_THRESHOLD,
    exact: bool = False,
    threads: int = 1,
) -> tuple[list[NoveltyReport], list[Sentence]]:
    """Verdict for every sentence; kept pool preserves input order.

    Fast mode may stop a scan at the first witness at or below the
    threshold (verdict decided) and only inspects candidates whose length
    could matter for the verdict, so a keep's closest_match may be None or
    non-minimal. exact=True scans for the true dissimilarity-minimizing
    match (ties to the lowest corpus sentence id).
    """
    if len(index) == 0:
        raise NoveltyError("corpus index is empty")
    thr = _threshold_fraction(threshold)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            reports = list(
                pool_exec.map(lambda s: _scan_sentence(s, index, thr, exact), sentences)
            )
    else:
        reports = [_scan_sentence(s, index, thr, exact) for s in sentences]
    kept = [r.sentence for r in reports if r.verdict == "keep"]
    return reports, kept


def filter_pool(
    pool: Sequence[GeneratedSample],
    index: CorpusIndex,
    threshold=DEFAULT_THRESHOLD,
    exact: bool = False,
    threads: int = 1,
) -> tuple[list[NoveltyReport], list[Sentence]]:
    """Split generated samples into sentences and filter each for novelty."""
    return filter_sentences(pool_sentences(pool), index, threshold, exact, threads)


def summarize(reports: Sequence[NoveltyReport]) -> dict:
    kept = sum(1 for r in reports if r.verdict == "keep")
    hist: dict[str, int] = {}
    for r in reports:
        if r.distance is None:
            key = "none"
        else:
            lo = (r.distance // 10) * 10
            key = f"{lo}-{lo + 9}"
        hist[key] = hist.get(key, 0) + 1
    ordered = dict(
        sorted(hist.items(), key=lambda kv: (kv[0] == "none", int(kv[0].split("-")[0]) if kv[0] != "none" else 0))
    )
    return {"kept": kept, "rejected": len(reports) - kept, "distance_histogram": ordered}


def write_report(
    reports: Sequence[NoveltyReport], path: str | Path, summary: bool = True
) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")
        if summary:
            fh.write(json.dumps({"summary": summarize(reports)}, ensure_ascii=False) + "\n")


def read_report(path: str | Path) -> tuple[list[NoveltyReport], dict | None]:
    reports: list[NoveltyReport] = []
    summary = None
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if "summary" in data:
                summary = data["summary"]
                continue
            reports.append(
                NoveltyReport(
                    sentence=Sentence(**data["sentence"]),
                    closest_match=data["closest_match"],
                    distance=data["distance"],
                    dissimilarity=data["dissimilarity"],
                    verdict=data["verdict"],
                )
            )
    return reports, summary
