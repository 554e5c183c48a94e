"""Vocabulary, caption codecs, feature stores, and the synthetic corpus."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from langcnn import data
from langcnn.data import (
    END,
    START,
    UNK,
    CaptionRecord,
    FeatureStore,
    Vocabulary,
    assign_splits,
    build_vocabulary,
    decode_caption,
    encode_caption,
    normalize,
    synth_corpus,
)
from langcnn.errors import MissingFeatureError, ParseError, VocabularyError


class TestNormalize:
    def test_lowercase_and_strip_punctuation(self):
        assert normalize("A cat!!") == ["a", "cat"]

    def test_digits_are_stripped(self):
        assert normalize("route 66 ahead") == ["route", "ahead"]

    def test_whitespace_runs_collapse(self):
        assert normalize("  a\t b \n c ") == ["a", "b", "c"]


class TestBuildVocabulary:
    def test_two_captions_min_count_one(self):
        vocab = build_vocabulary(["a cat", "a dog"], min_count=1)
        assert len(vocab) == 6
        assert vocab.tokens[:3] == ["<START>", "<END>", "<UNK>"]
        # "a" has count 2, then alphabetical ties at count 1.
        assert vocab.tokens[3:] == ["a", "cat", "dog"]

    def test_min_count_two_prunes_singletons(self):
        vocab = build_vocabulary(["a cat", "a dog"], min_count=2)
        assert len(vocab) == 4
        assert vocab.lookup("cat") == UNK
        assert vocab.lookup("dog") == UNK
        assert vocab.lookup("a") == 3

    def test_empty_corpus_raises(self):
        with pytest.raises(VocabularyError):
            build_vocabulary([], min_count=1)
        with pytest.raises(VocabularyError):
            build_vocabulary(["!!!", "123"], min_count=1)

    def test_specials_are_distinct_and_first(self):
        vocab = build_vocabulary(["x"], min_count=1)
        assert (vocab.lookup("<START>"), START) == (0, 0)
        assert vocab.tokens[END] == "<END>"
        assert vocab.tokens[UNK] == "<UNK>"

    def test_lookup_round_trips(self):
        vocab = build_vocabulary(["red fish blue fish"], min_count=1)
        for idx, tok in enumerate(vocab.tokens):
            assert vocab.lookup(tok) == idx
            assert vocab.token(idx) == tok

    @settings(max_examples=30, deadline=None)
    @given(st.permutations(["a cat sat", "a dog ran", "the cat ran", "dogs"]))
    def test_order_independence(self, shuffled):
        baseline = build_vocabulary(
            ["a cat sat", "a dog ran", "the cat ran", "dogs"], min_count=1
        )
        assert build_vocabulary(shuffled, min_count=1).tokens == baseline.tokens


class TestEncodeDecode:
    @pytest.fixture()
    def vocab(self):
        return build_vocabulary(["a cat", "a dog"], min_count=1)

    def test_simple_encode(self, vocab):
        assert encode_caption(vocab, "a cat") == [START, 3, 4, END]

    def test_long_caption_truncates_to_max_words(self, vocab):
        text = " ".join(["a"] * 20)
        assert len(encode_caption(vocab, text, max_words=16)) == 18

    def test_unknown_word_maps_to_unk(self, vocab):
        assert encode_caption(vocab, "a wombat")[2] == UNK

    def test_empty_caption_is_start_end(self, vocab):
        assert encode_caption(vocab, "!!!") == [START, END]

    def test_decode_inverts_encode_for_known_words(self, vocab):
        text = "a cat a dog"
        decoded = decode_caption(vocab, encode_caption(vocab, text))
        assert decoded == " ".join(normalize(text))

    def test_caption_record_validates_frame(self):
        with pytest.raises(ValueError):
            CaptionRecord("x", [START, 3])
        with pytest.raises(ValueError):
            CaptionRecord("x", [3, END])
        CaptionRecord("x", [START, END])  # minimal frame is fine


class TestVocabularyFiles:
    def test_save_load_round_trip(self, tmp_path):
        vocab = build_vocabulary(["a cat sat on a mat"], min_count=1)
        path = tmp_path / "vocab.tsv"
        vocab.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.tokens == vocab.tokens
        assert loaded.counts == vocab.counts

    def test_load_rejects_gapped_indices(self, tmp_path):
        path = tmp_path / "vocab.tsv"
        path.write_text("0\t<START>\t0\n2\t<END>\t0\n")
        with pytest.raises(ParseError) as err:
            Vocabulary.load(path)
        assert ":2:" in str(err.value)


class TestFeatureStore:
    def test_dimension_consistency_enforced(self):
        with pytest.raises(ValueError):
            FeatureStore({"a": np.zeros(3), "b": np.zeros(4)})

    def test_missing_id_raises(self):
        store = FeatureStore({"a": np.arange(3.0)})
        with pytest.raises(MissingFeatureError) as err:
            store.get("nope")
        assert "nope" in str(err.value)

    def test_save_load_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        store = FeatureStore(
            {f"img{i}": rng.uniform(-2, 2, size=7) for i in range(4)}
        )
        path = tmp_path / "features.tsv"
        store.save(path)
        loaded = data.load_features(path)
        assert loaded.ids() == store.ids()
        for image_id in store.ids():
            # repr round-trip keeps doubles bit-exact
            assert np.array_equal(loaded.get(image_id), store.get(image_id))

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "features.tsv"
        path.write_text("a\t1.0,2.0\nb\t1.0,notanumber\n")
        with pytest.raises(ParseError) as err:
            data.load_features(path)
        assert ":2:" in str(err.value)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "features.tsv"
        path.write_text("a\t1.0\na\t2.0\n")
        with pytest.raises(ParseError):
            data.load_features(path)


class TestCaptionFiles:
    def test_round_trip(self, tmp_path):
        pairs = [("img0", "a cat"), ("img1", "a dog runs")]
        path = tmp_path / "captions.tsv"
        data.save_captions(path, pairs)
        assert data.load_captions(path) == pairs

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "captions.tsv"
        path.write_text("img0\ta cat\njusttext\n")
        with pytest.raises(ParseError) as err:
            data.load_captions(path)
        assert ":2:" in str(err.value)

    def test_hypotheses_accept_optional_logprob(self, tmp_path):
        path = tmp_path / "hyps.tsv"
        path.write_text("img0\ta cat\t-3.25\nimg1\ta dog\n")
        assert data.load_hypotheses(path) == [("img0", "a cat"), ("img1", "a dog")]

    def test_hypotheses_reject_bad_logprob(self, tmp_path):
        path = tmp_path / "hyps.tsv"
        path.write_text("img0\ta cat\tnotafloat\n")
        with pytest.raises(ParseError):
            data.load_hypotheses(path)


class TestSplits:
    def test_round_trip(self, tmp_path):
        splits = {"img0": "train", "img1": "val"}
        path = tmp_path / "splits.tsv"
        data.save_splits(path, splits)
        assert data.load_splits(path) == splits

    def test_unknown_split_name_rejected(self, tmp_path):
        path = tmp_path / "splits.tsv"
        path.write_text("img0\ttest\n")
        with pytest.raises(ParseError):
            data.load_splits(path)

    def test_assign_splits_sizes(self):
        ids = [f"img{i}" for i in range(32)]
        splits = assign_splits(ids, seed=0)
        assert sorted(splits) == sorted(ids)
        assert sum(1 for s in splits.values() if s == "val") == 4
        assert sum(1 for s in splits.values() if s == "train") == 28

    def test_assign_splits_always_trains_a_singleton(self):
        assert list(assign_splits(["only"], seed=0).values()) == ["train"]

    def test_assign_splits_deterministic(self):
        ids = [f"img{i}" for i in range(10)]
        assert assign_splits(ids, seed=3) == assign_splits(ids, seed=3)


class TestSynthCorpus:
    def test_sizes(self):
        pairs, store = synth_corpus(7, 32)
        assert len(pairs) == 32
        assert len(store) == 32
        assert [pid for pid, _ in pairs] == [f"img{i:04d}" for i in range(32)]

    def test_same_seed_byte_identical(self, tmp_path):
        for run in ("one", "two"):
            out = tmp_path / run
            out.mkdir()
            pairs, store = synth_corpus(9, 12, grammar_size=5)
            data.save_captions(out / "captions.tsv", pairs)
            store.save(out / "features.tsv")
        assert (tmp_path / "one/captions.tsv").read_bytes() == (
            tmp_path / "two/captions.tsv"
        ).read_bytes()
        assert (tmp_path / "one/features.tsv").read_bytes() == (
            tmp_path / "two/features.tsv"
        ).read_bytes()

    def test_different_seeds_differ(self):
        assert synth_corpus(0, 8)[0] != synth_corpus(1, 8)[0]

    def test_features_encode_the_caption_slots(self):
        # Each feature vector is six stacked one-hot blocks; the caption is
        # a deterministic function of them, so the task is learnable.
        grammar = 6
        pairs, store = synth_corpus(2, 10, grammar_size=grammar)
        for image_id, caption in pairs:
            vec = store.get(image_id)
            assert vec.shape == (6 * grammar,)
            blocks = vec.reshape(6, grammar)
            assert np.array_equal(blocks.sum(axis=1), np.ones(6))
            words = caption.split()
            slots = [words[1], words[2], words[3], words[6], words[9], words[10]]
            lists = (
                data._COLORS,
                data._OBJECTS,
                data._VERBS,
                data._PLACES,
                data._COLORS,
                data._OBJECTS,
            )
            for block, word, pool in zip(blocks, slots, lists):
                assert pool[int(np.argmax(block))] == word

    def test_grammar_size_bounds(self):
        with pytest.raises(ValueError):
            synth_corpus(0, 4, grammar_size=0)
        with pytest.raises(ValueError):
            synth_corpus(0, 4, grammar_size=21)
        with pytest.raises(ValueError):
            synth_corpus(0, 0)
