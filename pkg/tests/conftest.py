import string

import numpy as np
import pytest

from spamtax.corpus import Document
from spamtax.textprep import TokenDoc, load_stopwords


@pytest.fixture(scope="session")
def stopwords():
    return load_stopwords()


def random_word(rng: np.random.Generator, length: int) -> str:
    return "".join(rng.choice(list(string.ascii_lowercase), size=length))


def make_keyword_pools(rng: np.random.Generator, stopword_set, n_pools=3, pool_size=30,
                       n_noise=50) -> tuple[list[list[str]], list[str]]:
    """Disjoint per-category keyword pools plus a shared noise pool."""
    seen = set(stopword_set)
    pools = []
    for _ in range(n_pools):
        pool = []
        while len(pool) < pool_size:
            w = random_word(rng, int(rng.integers(5, 9)))
            if w not in seen:
                seen.add(w)
                pool.append(w)
        pools.append(pool)
    noise = []
    while len(noise) < n_noise:
        w = random_word(rng, int(rng.integers(5, 9)))
        if w not in seen:
            seen.add(w)
            noise.append(w)
    return pools, noise


def make_synthetic_corpus(stopword_set, n_docs=300, proportions=(0.62, 0.33, 0.05),
                          doc_len=30, noise_rate=0.10, seed=7):
    """Synthetic labeled corpus: disjoint keyword pools with uniform noise.

    Category sizes mirror the requested proportions exactly (remainder goes
    to the largest category). Returns (documents, token_docs, labels).
    """
    rng = np.random.default_rng(seed)
    pools, noise = make_keyword_pools(rng, stopword_set, n_pools=len(proportions))
    counts = [int(round(p * n_docs)) for p in proportions]
    counts[0] += n_docs - sum(counts)
    categories = [f"cat_{chr(ord('a') + i)}" for i in range(len(proportions))]

    documents, token_docs, labels = [], [], []
    doc_no = 0
    for ci, count in enumerate(counts):
        for _ in range(count):
            tokens = []
            for _ in range(doc_len):
                if rng.random() < noise_rate:
                    tokens.append(noise[int(rng.integers(len(noise)))])
                else:
                    tokens.append(pools[ci][int(rng.integers(len(pools[ci])))])
            doc_id = f"doc{doc_no:04d}"
            doc_no += 1
            text = " ".join(tokens)
            documents.append(Document(id=doc_id, text=text, language="en",
                                      lang_confidence=1.0, label=categories[ci]))
            token_docs.append(TokenDoc(id=doc_id, tokens=tuple(tokens)))
            labels.append(categories[ci])
    return documents, token_docs, labels


@pytest.fixture(scope="session")
def synthetic_corpus(stopwords):
    return make_synthetic_corpus(stopwords)
