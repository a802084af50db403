"""Decoder tests: sampling distribution, beam search vs exhaustive
enumeration, determinism, pool files."""

import json
import math

import numpy as np
import pytest

from newsloom.corpus import BOS_ID, EOS_ID, UNK_ID, Vocabulary
from newsloom.decode import (
    DecodeError,
    DecodeParams,
    GeneratedSample,
    beam_search,
    generate_pool,
    read_pool,
    sample,
    write_pool,
)
from newsloom.lm import (
    LanguageModel,
    LMConfig,
    forward,
    forward_logits,
    sequence_logprob,
    softmax64,
)


def make_model(vocab_size=8, seed=0, units=4, layers=2) -> LanguageModel:
    cfg = LMConfig(
        vocab_size=vocab_size, embed_dim=3, layers=layers, units=units, seed=seed
    )
    return LanguageModel.init(cfg)


def make_vocab(n_words: int) -> Vocabulary:
    words = {f"w{i}": 100 - i for i in range(n_words)}
    return Vocabulary.build(words, min_count=1)


def enumerate_terminated(model, max_len: int, ban_unk: bool):
    """All decodable sequences with their chain-rule logprobs, by tree walk.

    Sequences shorter than max_len end with EOS (its factor included);
    length-max_len sequences are also recorded as forced stops without EOS.
    """
    results = []

    def rec(prefix, logprob, logits_row, state):
        row = softmax64(logits_row).astype(model.dtype)
        for tok in range(model.config.vocab_size):
            if ban_unk and tok == UNK_ID:
                continue
            lp = logprob + math.log(float(row[tok]))
            seq = prefix + (tok,)
            if tok == EOS_ID:
                results.append((seq, lp))
                continue
            if len(seq) == max_len:
                results.append((seq, lp))
                continue
            nxt, nstate = forward_logits(model, [tok], state)
            rec(seq, lp, nxt[0], nstate)

    first, state = forward_logits(model, [BOS_ID])
    rec((), 0.0, first[0], state)
    return results


class TestDecodeParams:
    def test_defaults(self):
        p = DecodeParams()
        assert p.mode == "sample"
        assert p.beam_width == 8
        assert p.length_norm_alpha == 0.7
        assert p.max_tokens == 400
        assert p.ban_unk is True

    @pytest.mark.parametrize(
        "kw",
        [
            dict(mode="greedy"),
            dict(temperature=0.0),
            dict(temperature=-1.0),
            dict(beam_width=0),
            dict(max_tokens=0),
            dict(length_norm_alpha=1.5),
            dict(seed=-1),
            dict(seed=2**64),
        ],
    )
    def test_invalid_rejected(self, kw):
        with pytest.raises(DecodeError):
            DecodeParams(**kw)

    def test_json_round_trip(self):
        p = DecodeParams(mode="beam", beam_width=3, seed=99)
        assert DecodeParams.from_json(p.to_json()) == p


class TestSample:
    def test_same_seed_identical(self):
        model = make_model(seed=1)
        vocab = make_vocab(4)
        p = DecodeParams(seed=42, max_tokens=20)
        a = sample(model, vocab, p)
        b = sample(model, vocab, p)
        assert a.token_ids == b.token_ids
        assert a.logprob == b.logprob
        assert a.text == b.text

    def test_different_seeds_differ(self):
        model = make_model(seed=1)
        vocab = make_vocab(4)
        runs = {
            tuple(sample(model, vocab, DecodeParams(seed=s, max_tokens=30)).token_ids)
            for s in range(8)
        }
        assert len(runs) > 1

    def test_logprob_revalidates(self):
        model = make_model(seed=2)
        vocab = make_vocab(4)
        for seed in range(5):
            s = sample(model, vocab, DecodeParams(seed=seed, max_tokens=25))
            assert s.logprob == pytest.approx(
                sequence_logprob(model, s.token_ids), abs=1e-6
            )

    def test_zero_temperature_limit_is_greedy(self):
        model = make_model(seed=3)
        vocab = make_vocab(4)
        p = DecodeParams(temperature=1e-9, max_tokens=10, ban_unk=False)
        got = sample(model, vocab, p).token_ids
        expected = []
        state = None
        prev = BOS_ID
        for _ in range(10):
            row, state = forward(model, [prev], state)
            tok = int(np.argmax(row[0]))
            expected.append(tok)
            if tok == EOS_ID:
                break
            prev = tok
        assert got == expected

    def test_ban_unk_never_emits_unk(self):
        model = make_model(seed=4)
        model.params["out.b"][UNK_ID] = 8.0  # make UNK overwhelmingly likely
        vocab = make_vocab(4)
        s = sample(model, vocab, DecodeParams(seed=0, max_tokens=50))
        assert UNK_ID not in s.token_ids
        s2 = sample(model, vocab, DecodeParams(seed=0, max_tokens=50, ban_unk=False))
        assert UNK_ID in s2.token_ids

    def test_stops_at_eos_and_text_drops_it(self):
        model = make_model(seed=5)
        model.params["out.b"][EOS_ID] = 12.0
        vocab = make_vocab(4)
        s = sample(model, vocab, DecodeParams(seed=0, max_tokens=50))
        assert s.token_ids[-1] == EOS_ID
        assert s.token_ids.count(EOS_ID) == 1
        assert "</s>" not in s.text

    def test_max_tokens_cap(self):
        model = make_model(seed=6)
        model.params["out.b"][EOS_ID] = -30.0
        vocab = make_vocab(4)
        s = sample(model, vocab, DecodeParams(seed=0, max_tokens=17))
        assert len(s.token_ids) == 17

    def test_prompt_included_in_ids_and_logprob(self):
        model = make_model(seed=7)
        vocab = make_vocab(4)
        prompt = [4, 5]
        s = sample(model, vocab, DecodeParams(seed=1, max_tokens=6), prompt=prompt)
        assert s.token_ids[:2] == prompt
        assert s.logprob == pytest.approx(sequence_logprob(model, s.token_ids), abs=1e-6)

    def test_mode_mismatch_rejected(self):
        model = make_model()
        vocab = make_vocab(4)
        with pytest.raises(DecodeError):
            sample(model, vocab, DecodeParams(mode="beam"))

    def test_sampled_frequencies_match_softmax(self):
        """Monte-Carlo check: with zeroed recurrence every step draws from the
        same fixed softmax; 100k draws must match it within 1% absolute."""
        cfg = LMConfig(vocab_size=5, embed_dim=2, layers=1, units=3, seed=0)
        model = LanguageModel.init(cfg)
        for p in model.params.values():
            p[...] = 0.0
        bias = np.array([0.4, -0.3, -25.0, 0.9, -0.6], dtype=np.float32)
        model.params["out.b"][...] = bias  # EOS suppressed so the walk never stops
        vocab = make_vocab(1)
        s = sample(model, vocab, DecodeParams(seed=123, max_tokens=100_000, ban_unk=False))
        assert len(s.token_ids) == 100_000
        counts = np.bincount(np.array(s.token_ids), minlength=5)
        freqs = counts / counts.sum()
        exact = softmax64(bias.astype(np.float64))
        assert np.abs(freqs - exact).max() < 0.01


class TestBeamSearch:
    def test_mode_mismatch_rejected(self):
        with pytest.raises(DecodeError):
            beam_search(make_model(), DecodeParams(mode="sample"))

    def test_width_one_alpha_zero_is_greedy(self):
        vocab = make_vocab(4)
        for seed in range(6):
            model = make_model(seed=seed)
            greedy = sample(
                model,
                vocab,
                DecodeParams(temperature=1e-9, max_tokens=8, seed=0),
            )
            results = beam_search(
                model,
                DecodeParams(mode="beam", beam_width=1, length_norm_alpha=0.0, max_tokens=8),
            )
            assert results[0][0] == greedy.token_ids
            assert results[0][1] == pytest.approx(greedy.logprob, abs=1e-9)

    def test_full_width_matches_enumeration(self):
        model = make_model(vocab_size=8, seed=11)
        params = DecodeParams(
            mode="beam",
            beam_width=8**4,
            max_tokens=4,
            length_norm_alpha=0.0,
            ban_unk=False,
        )
        results = beam_search(model, params)
        oracle = enumerate_terminated(model, max_len=4, ban_unk=False)
        oracle.sort(key=lambda r: (-r[1], r[0]))
        assert list(results[0][0]) == list(oracle[0][0])
        assert results[0][1] == pytest.approx(oracle[0][1], abs=1e-12)
        # the whole retired pool agrees, not just the winner
        assert len(results) == len(oracle)
        for (got_ids, got_lp), (want_ids, want_lp) in zip(results[:50], oracle[:50]):
            assert list(got_ids) == list(want_ids)
            assert got_lp == pytest.approx(want_lp, abs=1e-12)

    def test_alpha_zero_results_in_nonincreasing_logprob_order(self):
        model = make_model(seed=13)
        results = beam_search(
            model,
            DecodeParams(mode="beam", beam_width=4, max_tokens=5, length_norm_alpha=0.0),
        )
        lps = [lp for _, lp in results]
        assert lps == sorted(lps, reverse=True)

    def test_uniform_model_ties_break_lexicographically(self):
        cfg = LMConfig(vocab_size=8, embed_dim=2, layers=1, units=3)
        model = LanguageModel.init(cfg)
        for p in model.params.values():
            p[...] = 0.0
        results = beam_search(
            model,
            DecodeParams(
                mode="beam", beam_width=8, max_tokens=1, length_norm_alpha=0.0
            ),
        )
        # every length-1 result has logprob ln(1/8); order must be by token id
        assert [ids[0] for ids, _ in results] == [1, 2, 3, 4, 5, 6, 7]
        for _, lp in results:
            assert lp == pytest.approx(math.log(1 / 8), rel=1e-12)

    def test_widening_never_lowers_top_score(self):
        for seed in range(20):
            model = make_model(vocab_size=6, seed=seed)
            tops = []
            for width in (1, 2, 4, 8, 16):
                results = beam_search(
                    model,
                    DecodeParams(
                        mode="beam",
                        beam_width=width,
                        max_tokens=4,
                        length_norm_alpha=0.0,
                    ),
                )
                tops.append(results[0][1])
            for narrow, wide in zip(tops, tops[1:]):
                assert wide >= narrow - 1e-12

    def test_logprob_revalidates(self):
        model = make_model(seed=17)
        results = beam_search(
            model, DecodeParams(mode="beam", beam_width=3, max_tokens=6)
        )
        for ids, lp in results:
            assert lp == pytest.approx(sequence_logprob(model, ids), abs=1e-6)

    def test_prompt_prefix_preserved(self):
        model = make_model(seed=19)
        results = beam_search(
            model,
            DecodeParams(mode="beam", beam_width=2, max_tokens=4),
            prompt=[5, 6],
        )
        for ids, _ in results:
            assert ids[:2] == [5, 6]


class TestGeneratePool:
    def test_count_one_equals_single_sample(self):
        model = make_model(seed=21)
        vocab = make_vocab(4)
        p = DecodeParams(seed=7, max_tokens=15)
        pool = generate_pool(model, vocab, p, count=1)
        single = sample(model, vocab, p)
        assert pool[0].token_ids == single.token_ids
        assert pool[0].logprob == single.logprob

    def test_pool_seeds_strictly_increase(self):
        model = make_model(seed=21)
        vocab = make_vocab(4)
        pool = generate_pool(
            model, vocab, DecodeParams(seed=100, max_tokens=5), count=10
        )
        seeds = [s.params.seed for s in pool]
        assert seeds == list(range(100, 110))

    def test_pool_file_round_trip_and_determinism(self, tmp_path):
        model = make_model(seed=23)
        vocab = make_vocab(4)
        p = DecodeParams(seed=0, max_tokens=10)
        f1, f2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        pool = generate_pool(model, vocab, p, count=5, topic="t", path=f1)
        generate_pool(model, vocab, p, count=5, topic="t", path=f2)
        assert f1.read_bytes() == f2.read_bytes()
        loaded = read_pool(f1)
        assert len(loaded) == 5
        assert loaded[0].token_ids == pool[0].token_ids
        assert loaded[0].params == pool[0].params

    def test_pool_records_carry_full_params(self, tmp_path):
        model = make_model(seed=23)
        vocab = make_vocab(4)
        path = tmp_path / "pool.jsonl"
        generate_pool(
            model,
            vocab,
            DecodeParams(seed=3, max_tokens=5, temperature=0.8),
            count=2,
            topic="asia",
            model_checkpoint="ckpt-1",
            path=path,
        )
        rec = json.loads(path.read_text().splitlines()[0])
        assert rec["topic"] == "asia"
        assert rec["model_checkpoint"] == "ckpt-1"
        assert rec["params"]["temperature"] == 0.8
        assert rec["params"]["mode"] == "sample"

    def test_beam_mode_rejected(self):
        model = make_model()
        vocab = make_vocab(4)
        with pytest.raises(DecodeError, match="sample mode"):
            generate_pool(model, vocab, DecodeParams(mode="beam"), count=2)

    def test_bad_count_rejected(self):
        model = make_model()
        vocab = make_vocab(4)
        with pytest.raises(DecodeError, match="count"):
            generate_pool(model, vocab, DecodeParams(), count=0)


class TestGeneratedSample:
    def test_json_round_trip(self):
        s = GeneratedSample(
            topic="x",
            token_ids=[4, 5, 2],
            text="w0 w1",
            logprob=-3.5,
            params=DecodeParams(seed=9),
            model_checkpoint="c",
        )
        assert GeneratedSample.from_json(s.to_json()).token_ids == s.token_ids
        assert GeneratedSample.from_json(s.to_json()).params == s.params
