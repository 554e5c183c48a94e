"""Shared helpers: small model factories and corpus fixtures."""

import numpy as np
import pytest

from langcnn.data import (
    CaptionRecord,
    build_vocabulary,
    encode_caption,
    synth_corpus,
)
from langcnn.language_cnn import LangCnnConfig
from langcnn.model import CaptionerModel, ModelConfig


def tiny_model(
    vocab_size=6,
    feature_dim=5,
    dim=8,
    cell="simple_rnn",
    seed=0,
    window=4,
    kernels=(3, 2),
    dropout=0.0,
    use_cnn_l=True,
    cell_layers=1,
):
    """A small captioner suitable for exhaustive decoding and FD checks."""
    config = ModelConfig(
        vocab_size=vocab_size,
        feature_dim=feature_dim,
        embed_dim=dim,
        hidden_dim=dim,
        cell=cell,
        cell_layers=cell_layers,
        use_cnn_l=use_cnn_l,
        dropout=dropout,
        langcnn=LangCnnConfig(window=window, embed_dim=dim, kernels=kernels),
    )
    return CaptionerModel(config, seed=seed)


def tiny_features(feature_dim=5, seed=1):
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=feature_dim)


@pytest.fixture(scope="session")
def small_corpus():
    """Six synthetic images with a small grammar, encoded and ready."""
    pairs, store = synth_corpus(3, 6, grammar_size=4)
    vocab = build_vocabulary((caption for _, caption in pairs), min_count=1)
    records = [
        CaptionRecord(image_id, encode_caption(vocab, caption))
        for image_id, caption in pairs
    ]
    return vocab, records, store
