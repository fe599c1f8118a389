import numpy as np
import pytest

from luxgen import subword
from luxgen.model import ModelConfig, TrainConfig, initial_checkpoint, pretrain
from luxgen.model.decoding import DecodeConfig, DecodeError, generate, generate_ids
from luxgen.seeding import make_rng
from tests.test_training import copy_vocab, denoise_pairs, tiny_config


@pytest.fixture(scope="module")
def trained():
    config = tiny_config()
    pairs = denoise_pairs(n=8)
    checkpoint = pretrain(
        pairs, config, TrainConfig(learning_rate=3e-3, batch_size=8, total_steps=120, seed=1)
    )
    return checkpoint, pairs


class TestGenerateIds:
    def test_beam_one_equals_greedy(self, trained):
        checkpoint, pairs = trained
        params = checkpoint.as_params()
        for pair in pairs[:4]:
            greedy = generate_ids(
                params, checkpoint.config, list(pair.input_ids),
                DecodeConfig(mode="greedy", max_new_tokens=24),
            )
            beam = generate_ids(
                params, checkpoint.config, list(pair.input_ids),
                DecodeConfig(mode="beam", beam_width=1, max_new_tokens=24),
            )
            assert greedy == beam

    def test_wider_beam_not_worse_logprob(self, trained):
        # The width-4 best hypothesis can't have lower total log-probability
        # than the greedy path when both finished.
        checkpoint, pairs = trained
        params = checkpoint.as_params()
        config = checkpoint.config

        def score(ids, out):
            from luxgen.model.network import decode, encode

            total = 0.0
            prefix = [subword.PAD_ID]
            batch = np.asarray([ids])
            enc = encode(params, config, batch, np.ones_like(batch, dtype=bool))
            for token in out + [subword.EOS_ID]:
                logits = decode(params, config, enc, np.ones_like(batch, dtype=bool),
                                np.asarray([prefix])).data[0, -1].astype(np.float64)
                logp = logits - np.log(np.exp(logits - logits.max()).sum()) - logits.max()
                total += logp[token]
                prefix.append(token)
            return total

        ids = list(pairs[0].input_ids)
        greedy = generate_ids(params, config, ids, DecodeConfig(mode="greedy", max_new_tokens=16))
        beam = generate_ids(params, config, ids, DecodeConfig(mode="beam", beam_width=4, max_new_tokens=16))
        assert score(ids, beam) >= score(ids, greedy) - 1e-9

    def test_banned_ids_never_emitted(self, trained):
        checkpoint, pairs = trained
        params = checkpoint.as_params()
        banned = tuple(range(50, 60))
        out = generate_ids(
            params, checkpoint.config, list(pairs[0].input_ids),
            DecodeConfig(max_new_tokens=24), banned_ids=banned,
        )
        assert not set(out) & set(banned)

    def test_length_cap_respected(self, trained):
        checkpoint, pairs = trained
        out = generate_ids(
            checkpoint.as_params(), checkpoint.config, list(pairs[0].input_ids),
            DecodeConfig(max_new_tokens=3),
        )
        assert len(out) <= 3

    def test_bad_config_rejected(self):
        with pytest.raises(DecodeError):
            DecodeConfig(mode="sampled")
        with pytest.raises(DecodeError):
            DecodeConfig(beam_width=0)


class TestGenerateText:
    def test_no_sentinel_surfaces_in_output(self):
        vocab, _ = copy_vocab()
        config = ModelConfig(
            num_layers=1, num_heads=2, hidden_size=16, feedforward_size=32,
            vocab_size=vocab.vocab_size, max_seq_len=24,
        )
        checkpoint = initial_checkpoint(config, seed=0)
        for seed in range(5):
            rng = make_rng(seed)
            text = " ".join(f"w{int(i)}" for i in rng.integers(0, 30, size=6))
            out = generate(checkpoint, vocab, text, DecodeConfig(max_new_tokens=12))
            assert "<extra_" not in out

    def test_long_input_truncated_not_crashing(self):
        vocab, _ = copy_vocab()
        config = ModelConfig(
            num_layers=1, num_heads=2, hidden_size=16, feedforward_size=32,
            vocab_size=vocab.vocab_size, max_seq_len=16,
        )
        checkpoint = initial_checkpoint(config, seed=0)
        out = generate(checkpoint, vocab, "w1 " * 200, DecodeConfig(max_new_tokens=4))
        assert isinstance(out, str)
