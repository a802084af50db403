"""Text generation: temperature sampling and beam search over a trained model.

Both decoders advance one hypothesis at a time so every probability row is
bitwise identical to what sequence_logprob would recompute for the emitted
ids; stored log-probabilities therefore re-validate tightly.

Emitted token id lists include the terminal sentence-end id when generation
stopped naturally (the detokenizer drops it from text), so the stored
logprob is exactly the chain-rule log-probability of the emitted ids.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import BOS_ID, EOS_ID, UNK_ID, TokenSequence, Vocabulary
from .lm import LanguageModel, LMState, forward_logits, softmax64

ARGMAX_TEMPERATURE = 1e-6
DEFAULT_BEAM_WIDTH = 8
DEFAULT_ALPHA = 0.7
DEFAULT_MAX_TOKENS = 400


class DecodeError(Exception):
    pass


@dataclass(frozen=True)
class DecodeParams:
    mode: str = "sample"
    temperature: float = 1.0
    beam_width: int = DEFAULT_BEAM_WIDTH
    max_tokens: int = DEFAULT_MAX_TOKENS
    length_norm_alpha: float = DEFAULT_ALPHA
    seed: int = 0
    ban_unk: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("sample", "beam"):
            raise DecodeError(f"mode must be 'sample' or 'beam', got {self.mode!r}")
        if not self.temperature > 0:
            raise DecodeError("temperature must be > 0")
        if self.beam_width < 1:
            raise DecodeError("beam_width must be >= 1")
        if self.max_tokens < 1:
            raise DecodeError("max_tokens must be >= 1")
        if not 0.0 <= self.length_norm_alpha <= 1.0:
            raise DecodeError("length_norm_alpha must be in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise DecodeError("seed must be an unsigned 64-bit integer")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "DecodeParams":
        return cls(**data)


@dataclass
class GeneratedSample:
    topic: str
    token_ids: list[int]
    text: str
    logprob: float
    params: DecodeParams
    model_checkpoint: str = ""

    def to_json(self) -> dict:
        return {
            "topic": self.topic,
            "token_ids": self.token_ids,
            "text": self.text,
            "logprob": self.logprob,
            "params": self.params.to_json(),
            "model_checkpoint": self.model_checkpoint,
        }

    @classmethod
    def from_json(cls, data: dict) -> "GeneratedSample":
        return cls(
            topic=data["topic"],
            token_ids=list(data["token_ids"]),
            text=data["text"],
            logprob=data["logprob"],
            params=DecodeParams.from_json(data["params"]),
            model_checkpoint=data.get("model_checkpoint", ""),
        )


def _prompt_ids(prompt) -> list[int]:
    if prompt is None:
        return []
    if isinstance(prompt, TokenSequence):
        return list(prompt.ids)
    return [int(t) for t in prompt]


def _consume_prompt(model: LanguageModel, prompt: list[int]):
    """Feed BOS + prompt; return (prompt logprob, last logits row, state)."""
    ids = [BOS_ID] + prompt
    logits, state = forward_logits(model, ids)
    logprob = 0.0
    for t, tok in enumerate(prompt):
        row = softmax64(logits[t]).astype(model.dtype)
        logprob += math.log(float(row[tok]))
    return logprob, logits[-1], state


def _next(model: LanguageModel, token: int, state: LMState):
    logits, new_state = forward_logits(model, [token], state)
    return logits[0], new_state


def sample(
    model: LanguageModel,
    vocab: Vocabulary,
    params: DecodeParams,
    prompt=None,
    topic: str = "",
    model_checkpoint: str = "",
) -> GeneratedSample:
    """Draw tokens from softmax(logits/temperature) until EOS or max_tokens.

    Temperatures below 1e-6 switch to argmax (greedy) decoding. The stored
    logprob always scores the plain temperature-1 distribution.
    """
    if params.mode != "sample":
        raise DecodeError(f"sample() called with mode {params.mode!r}")
    rng = np.random.default_rng(params.seed)
    ids = _prompt_ids(prompt)
    logprob, logits_row, state = _consume_prompt(model, ids)
    greedy = params.temperature < ARGMAX_TEMPERATURE

    for _ in range(params.max_tokens):
        scoring_row = softmax64(logits_row).astype(model.dtype)
        masked = logits_row.astype(np.float64)
        if params.ban_unk:
            masked[UNK_ID] = -np.inf
        if greedy:
            tok = int(np.argmax(masked))
        else:
            weights = softmax64(masked / params.temperature)
            cum = np.cumsum(weights)
            tok = int(np.searchsorted(cum, rng.random(), side="right"))
            tok = min(tok, len(weights) - 1)
        logprob += math.log(float(scoring_row[tok]))
        ids.append(tok)
        if tok == EOS_ID:
            break
        logits_row, state = _next(model, tok, state)

    return GeneratedSample(
        topic=topic,
        token_ids=ids,
        text=vocab.decode_text(ids),
        logprob=logprob,
        params=params,
        model_checkpoint=model_checkpoint,
    )


@dataclass
class _Hyp:
    ids: tuple[int, ...]
    logprob: float
    state: LMState | None = None
    logits_row: np.ndarray | None = None
    finished: bool = False

    def score(self, alpha: float) -> float:
        if alpha == 0.0 or not self.ids:
            return self.logprob
        return self.logprob / (len(self.ids) ** alpha)


def beam_search(
    model: LanguageModel, params: DecodeParams, prompt=None
) -> list[tuple[list[int], float]]:
    """Beam decode; returns (ids, logprob) pairs, best normalized score first.

    Each step ranks every one-token extension of the live beams by
    score = logprob / len^alpha; the top beam_width survive. Survivors
    ending in EOS retire to the result pool (the beam shrinks rather than
    refilling, which makes width 1 coincide with greedy decoding). Ties
    break by lexicographic token-id order. Hypotheses still alive at
    max_tokens retire as-is without an EOS factor.
    """
    if params.mode != "beam":
        raise DecodeError(f"beam_search() called with mode {params.mode!r}")
    prompt_ids = tuple(_prompt_ids(prompt))
    prefix_lp, logits_row, state = _consume_prompt(model, list(prompt_ids))
    beams = [_Hyp(ids=prompt_ids, logprob=prefix_lp, state=state, logits_row=logits_row)]
    pool: list[_Hyp] = []
    alpha = params.length_norm_alpha

    for _ in range(params.max_tokens):
        if not beams:
            break
        candidates: list[tuple[float, tuple[int, ...], float, _Hyp, int]] = []
        for hyp in beams:
            row = softmax64(hyp.logits_row).astype(model.dtype)
            for tok in range(model.config.vocab_size):
                if params.ban_unk and tok == UNK_ID:
                    continue
                new_ids = hyp.ids + (tok,)
                lp = hyp.logprob + math.log(float(row[tok]))
                score = lp if alpha == 0.0 else lp / (len(new_ids) ** alpha)
                candidates.append((score, new_ids, lp, hyp, tok))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beams = []
        for _, new_ids, lp, parent, tok in candidates[: params.beam_width]:
            if tok == EOS_ID:
                pool.append(_Hyp(ids=new_ids, logprob=lp, finished=True))
            else:
                logits_row, new_state = _next(model, tok, parent.state)
                beams.append(
                    _Hyp(ids=new_ids, logprob=lp, state=new_state, logits_row=logits_row)
                )

    pool.extend(beams)  # out of budget: retire alive hypotheses without EOS
    pool.sort(key=lambda h: (-h.score(alpha), h.ids))
    return [(list(h.ids), h.logprob) for h in pool]


def generate_pool(
    model: LanguageModel,
    vocab: Vocabulary,
    params: DecodeParams,
    count: int,
    topic: str = "",
    model_checkpoint: str = "",
    path: str | Path | None = None,
) -> list[GeneratedSample]:
    """count independent samples with per-sample seeds seed+i, optionally
    written as a JSONL pool file. Sampling mode only: beam decoding is
    deterministic, so a beam pool would hold count identical records."""
    if count < 1:
        raise DecodeError("count must be >= 1")
    if params.mode != "sample":
        raise DecodeError("generate_pool requires sample mode")
    samples = []
    for i in range(count):
        per_sample = replace(params, seed=params.seed + i)
        samples.append(
            sample(model, vocab, per_sample, topic=topic, model_checkpoint=model_checkpoint)
        )
    if path is not None:
        write_pool(samples, path)
    return samples


def write_pool(samples: Sequence[GeneratedSample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def read_pool(path: str | Path) -> list[GeneratedSample]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(GeneratedSample.from_json(json.loads(line)))
    return out
