"""Shared generators for the test suite."""

import numpy as np

from tgmt.embeddings import EmbeddingTable

TOKEN_CHARS = (
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789_-.:/"
    "éßøñ中文"
)


def random_token(rng, max_len=12):
    n = int(rng.integers(1, max_len + 1))
    return "".join(TOKEN_CHARS[i] for i in rng.integers(0, len(TOKEN_CHARS), n))


def random_table(rng, max_vocab=30, max_dim=20) -> EmbeddingTable:
    dim = int(rng.integers(1, max_dim + 1))
    count = int(rng.integers(1, max_vocab + 1))
    tokens = set()
    while len(tokens) < count:
        tokens.add(random_token(rng))
    entries = []
    for token in sorted(tokens):
        vec = rng.normal(scale=3.0, size=dim).astype(np.float32)
        # sprinkle exact zeros and negative zeros to stress bit-exactness
        if rng.random() < 0.2:
            vec[rng.integers(0, dim)] = 0.0
        if rng.random() < 0.1:
            vec[rng.integers(0, dim)] = -0.0
        entries.append((token, vec))
    return EmbeddingTable(dim, entries)
