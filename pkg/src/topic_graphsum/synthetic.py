"""Synthetic corpora with planted topics, used as a ground-truth oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .text import RawDocument


@dataclass(frozen=True)
class SyntheticCorpus:
    documents: list[RawDocument]
    pools: list[list[str]]
    sentence_topics: list[list[int]]
    dominant_topics: list[int]
    params: dict

    def salient_labels(self) -> list[list[int]]:
        return [
            [int(t == dom) for t in topics]
            for topics, dom in zip(self.sentence_topics, self.dominant_topics)
        ]


def topic_word(topic: int, index: int) -> str:
    return f"t{topic}w{index:02d}"


def make_synthetic_corpus(
    seed: int,
    n_topics: int,
    words_per_topic: int,
    n_docs: int,
    sentences_per_doc: int,
    words_per_sentence: tuple[int, int] = (5, 8),
    concentration: float = 0.5,
) -> SyntheticCorpus:
    """Generate documents whose sentences each come from one planted topic.

    Every document draws a topic mixture from a symmetric Dirichlet, then
    each sentence draws a topic from that mixture and its words uniformly
    from the topic's pool. The dominant topic is the one contributing the
    most sentences (ties go to the larger mixture weight); its sentences, in
    order, form the reference summary.
    """
    if n_topics < 1 or words_per_topic < 1 or n_docs < 1 or sentences_per_doc < 1:
        raise ContractError("make_synthetic_corpus: sizes must be positive")
    lo, hi = words_per_sentence
    if not 1 <= lo <= hi:
        raise ContractError(f"make_synthetic_corpus: bad words_per_sentence {words_per_sentence}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pools = [[topic_word(k, i) for i in range(words_per_topic)] for k in range(n_topics)]
    docs, all_topics, dominants = [], [], []
    for d in range(n_docs):
        mix = rng.dirichlet(np.full(n_topics, concentration)) if n_topics > 1 else np.ones(1)
        topics = rng.choice(n_topics, size=sentences_per_doc, p=mix)
        counts = np.bincount(topics, minlength=n_topics)
        dominant = int(max(range(n_topics), key=lambda k: (counts[k], mix[k])))
        sentences = []
        for k in topics:
            length = int(rng.integers(lo, hi + 1))
            words = rng.choice(words_per_topic, size=length)
            sentences.append(" ".join(pools[k][w] for w in words))
        summary = [s for s, k in zip(sentences, topics) if k == dominant]
        docs.append(RawDocument(f"synth-{seed}-{d:05d}", sentences, summary))
        all_topics.append([int(k) for k in topics])
        dominants.append(dominant)
    params = {
        "seed": seed,
        "n_topics": n_topics,
        "words_per_topic": words_per_topic,
        "n_docs": n_docs,
        "sentences_per_doc": sentences_per_doc,
        "words_per_sentence": [lo, hi],
        "concentration": concentration,
    }
    return SyntheticCorpus(docs, pools, all_topics, dominants, params)
