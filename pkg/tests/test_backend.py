import itertools
import math

import numpy as np
import pytest
import torch

from speakerid.backend import BackendError, CapabilityError, OracleBackend, SequencePair, make_backend
from speakerid.backend.hf import HFSeq2SeqBackend

VOCAB = ["a", "b", "c"]


@pytest.fixture(scope="module")
def tiny():
    texts = ["the cat sat on the mat", "Speaker: Emma Mrs Elton replied by: said she he"]
    return HFSeq2SeqBackend.tiny(texts, d_model=32, layers=1, heads=2, ffn_dim=64, seed=0)


# -- oracle --------------------------------------------------------------------


def test_oracle_table_lookup():
    o = OracleBackend(VOCAB)
    o.set("src", [], {"a": 0.8})
    assert o.teacher_forced_probs(o.pair("src", "a")) == [0.8]


def test_oracle_missing_entry_is_uniform():
    o = OracleBackend(VOCAB)
    pair = o.pair("anything", "b c")
    assert o.teacher_forced_probs(pair) == [1 / 4, 1 / 4]


def test_oracle_unassigned_mass_spread_evenly():
    o = OracleBackend(VOCAB)
    o.set("s", [], {"a": 0.4})
    dist = o.next_token_probs(o.encode_source("s"), [])
    assert dist.tolist() == pytest.approx([0.4, 0.2, 0.2, 0.2])


def test_oracle_zero_probability_gold_word():
    o = OracleBackend(VOCAB)
    o.set("s", [], {"a": 1.0})
    with pytest.raises(BackendError, match="zero probability"):
        o.teacher_forced_probs(o.pair("s", "b"))


def test_oracle_unknown_word():
    with pytest.raises(BackendError, match="not in oracle vocabulary"):
        OracleBackend(VOCAB).encode_target("z")


def test_oracle_capabilities():
    o = OracleBackend(VOCAB)
    with pytest.raises(CapabilityError, match="backend not trainable"):
        o.fit_step([o.pair("s", "a")])
    with pytest.raises(CapabilityError, match="embeddings unsupported"):
        o.target_token_embeddings(o.pair("s", "a"))
    assert not o.trainable


def test_oracle_from_file(tmp_path):
    path = tmp_path / "oracle.json"
    path.write_text('{"vocab": ["a", "b"], "entries": [{"source": "s", "prefix": [], "dist": {"b": 0.9}}],'
                    ' "scripts": [{"source": "t", "text": "a b"}]}')
    o = make_backend(f"oracle:{path}")
    assert o.teacher_forced_probs(o.pair("s", "b")) == [0.9]
    assert o.decode(o.free_generate(o.encode_source("t"), 10)) == "a b"


def test_source_over_limit():
    o = OracleBackend(VOCAB)
    o.max_source_tokens = 3
    with pytest.raises(BackendError, match="maximum"):
        o.pair("w x y z", "a")


# -- decoding ------------------------------------------------------------------


def test_scripted_greedy_generation_stops_at_eos():
    o = OracleBackend(["Speaker:", "Mrs", "Elton", "Emma"])
    o.script("src", "Speaker: Mrs Elton")
    ids = o.free_generate(o.encode_source("src"), 32)
    assert ids[-1] == o.eos_token_id
    assert o.decode(ids) == "Speaker: Mrs Elton"


def test_max_length_one_emits_one_token():
    o = OracleBackend(["Speaker:", "Emma"])
    o.script("src", "Speaker: Emma")
    assert len(o.free_generate(o.encode_source("src"), 1)) == 1


def test_greedy_equals_beam_width_one():
    rng = np.random.default_rng(0)
    o = OracleBackend(VOCAB)
    for n in range(3):
        for prefix in itertools.product(VOCAB, repeat=n):
            p = rng.dirichlet(np.ones(4))
            o.set("s", list(prefix), dict(zip(o.vocab, p.tolist())))
    src = o.encode_source("s")
    assert o.free_generate(src, 3, "greedy") == o.free_generate(src, 3, "beam", 1)


def _best_sequence(o, src, max_length):
    """Brute force over every sequence of at most `max_length` tokens."""
    best, best_lp = None, -math.inf
    for n in range(1, max_length + 1):
        for seq in itertools.product(range(len(o.vocab)), repeat=n):
            if o.eos_token_id in seq[:-1]:
                continue
            if n < max_length and seq[-1] != o.eos_token_id:
                continue
            lp = sum(math.log(o.next_token_probs(src, list(seq[:i]))[t]) for i, t in enumerate(seq))
            if lp > best_lp:
                best, best_lp = list(seq), lp
    return best


@pytest.mark.parametrize("seed", range(5))
def test_wide_beam_is_exact(seed):
    rng = np.random.default_rng(seed)
    o = OracleBackend(VOCAB)
    for n in range(3):
        for prefix in itertools.product(VOCAB, repeat=n):
            o.set("s", list(prefix), dict(zip(o.vocab, rng.dirichlet(np.ones(4)).tolist())))
    src = o.encode_source("s")
    assert o.free_generate(src, 3, "beam", 64) == _best_sequence(o, src, 3)


def test_beam_beats_greedy_on_garden_path():
    o = OracleBackend(["x", "y"])
    o.set("s", [], {"x": 0.6, "y": 0.4})
    o.set("s", ["x"], {"x": 0.34, "y": 0.33})
    o.set("s", ["y"], {"</s>": 1.0})
    src = o.encode_source("s")
    assert o.decode(o.free_generate(src, 4, "greedy")) != "y"
    assert o.decode(o.free_generate(src, 4, "beam", 2)) == "y"


def test_bad_decoding_arguments():
    o = OracleBackend(VOCAB)
    with pytest.raises(ValueError):
        o.free_generate([], 0)
    with pytest.raises(ValueError):
        o.free_generate([], 3, "sampling")


# -- tiny HF backend -----------------------------------------------------------


def test_tiny_distribution_sums_to_one(tiny):
    src = tiny.encode_source("the cat sat replied by: <mask>")
    tgt = tiny.encode_target("Speaker: Emma")
    for c in range(len(tgt)):
        assert tiny.next_token_probs(src, tgt[:c]).sum() == pytest.approx(1.0, abs=1e-4)


def test_tiny_teacher_forced_matches_stepwise(tiny):
    pair = tiny.pair("the cat sat replied by: <mask>", "Speaker: Mrs Elton")
    batched = tiny.teacher_forced_probs(pair)
    stepwise = [tiny.next_token_probs(pair.source_tokens, pair.target_tokens[:c])[t]
                for c, t in enumerate(pair.target_tokens)]
    assert batched == pytest.approx(stepwise, abs=1e-12)


def test_tiny_scoring_is_deterministic_and_candidate_independent(tiny):
    src = tiny.encode_source("the cat sat on the mat")
    a, b = tiny.encode_target("Speaker: Emma"), tiny.encode_target("Speaker: Mrs Elton")
    alone = tiny.teacher_forced_probs_many(src, [a])[0]
    together = tiny.teacher_forced_probs_many(src, [b, a])[1]
    assert alone == together == tiny.teacher_forced_probs_many(src, [a])[0]


def test_tiny_target_includes_end_marker(tiny):
    ids = tiny.encode_target("Speaker: Emma")
    assert ids[-1] == tiny.eos_token_id
    assert tiny.decode(ids) == "Speaker: Emma"


def test_tiny_embeddings_shape(tiny):
    pair = tiny.pair("the cat", "Speaker: Mrs Elton")
    emb = tiny.target_token_embeddings(pair)
    assert emb.shape == (len(pair.target_tokens), 32)


def test_tiny_offsets_cover_name(tiny):
    text = "Speaker: Mrs Elton"
    spans = [text[s:e] for s, e in tiny.target_offsets(text) if e > s]
    assert spans == ["Speaker:", "Mrs", "Elton"]


def test_empty_batch_rejected(tiny):
    with pytest.raises(BackendError, match="empty batch"):
        tiny.fit_step([])


def test_overfitting_one_pair_drives_loss_towards_zero():
    backend = HFSeq2SeqBackend.tiny(["a b c Speaker: Emma"], d_model=32, layers=1, heads=2, ffn_dim=64, seed=1,
                                    learning_rate=3e-3)
    pair = backend.pair("a b c", "Speaker: Emma")
    losses = [backend.fit_step([pair]) for _ in range(150)]
    assert losses[-1] < 1e-2 * losses[0]
    # the loss of a target scored with probability 1 at every step is 0
    probs = backend.teacher_forced_probs(pair)
    assert -sum(math.log(p) for p in probs) == pytest.approx(losses[-1], abs=5e-2)


def test_fifty_steps_on_fixed_batch_decrease_loss():
    backend = HFSeq2SeqBackend.tiny(["a b c d Speaker: Emma Jane"], d_model=32, layers=1, heads=2, ffn_dim=64,
                                    seed=2)
    batch = [backend.pair("a b c", "Speaker: Emma"), backend.pair("d c b", "Speaker: Jane")]
    losses = [backend.fit_step(batch) for _ in range(50)]
    assert losses[-1] < losses[0]
    # non-increasing up to small optimizer wobble
    assert all(b <= a + 0.05 * losses[0] for a, b in zip(losses, losses[1:]))


def test_save_and_load_round_trip(tmp_path):
    backend = HFSeq2SeqBackend.tiny(["a b c Speaker: Emma"], d_model=32, layers=1, heads=2, ffn_dim=64, seed=3)
    pair = backend.pair("a b c", "Speaker: Emma")
    backend.fit_step([pair])
    backend.save(tmp_path / "ckpt")
    loaded = HFSeq2SeqBackend.load(tmp_path / "ckpt")
    assert loaded.teacher_forced_probs(pair) == backend.teacher_forced_probs(pair)
    assert loaded.hyperparameters() == backend.hyperparameters()
    # optimizer state travels with the weights
    assert backend.fit_step([pair]) == pytest.approx(loaded.fit_step([pair]), abs=1e-12)


def test_load_missing_checkpoint(tmp_path):
    with pytest.raises(BackendError, match="no backend checkpoint"):
        HFSeq2SeqBackend.load(tmp_path)


def test_same_seed_same_weights():
    a = HFSeq2SeqBackend.tiny(["x y"], d_model=16, layers=1, heads=2, ffn_dim=32, seed=5)
    b = HFSeq2SeqBackend.tiny(["x y"], d_model=16, layers=1, heads=2, ffn_dim=32, seed=5)
    for pa, pb in zip(a.model.parameters(), b.model.parameters()):
        assert torch.equal(pa, pb)


def test_unknown_backend_spec():
    with pytest.raises(ValueError):
        make_backend("quantum")


def test_sequence_pair_requires_target():
    with pytest.raises(ValueError):
        SequencePair((1, 2), ())
