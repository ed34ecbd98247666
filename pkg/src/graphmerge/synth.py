"""Synthetic multilingual toy task for experiments and benchmarks.

Three 'languages' share no surface forms but have a known 1:1 lexical
mapping: word k is 'e<k>' in English, 'f<k>' in L1, 'g<k>' in L2.
Translation is word-by-word, so token accuracy directly measures lexical
knowledge. Only English-centric corpora are produced (English pivot).
"""

from __future__ import annotations

import numpy as np

from .aligner import align_corpus, symmetrize, train_ibm1, transpose
from .corpus import BitextCorpus, CorpusCollection, build_vocabulary
from .graph import build_graph

SURFACE = {"en": "e", "l1": "f", "l2": "g"}


def _words(lang, indices):
    return ["%s%d" % (SURFACE[lang], k) for k in indices]


def _make_corpus(src_lang, tgt_lang, n_pairs, n_words, rng,
                 min_len=2, max_len=6):
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        idx = rng.integers(0, n_words, size=length)
        pairs.append((_words(src_lang, idx), _words(tgt_lang, idx)))
    return BitextCorpus(src_lang, tgt_lang, pairs)


def make_toy_task(n_words=40, high_pairs=400, low_pairs=40, dev_pairs=60,
                  seed=0, min_len=2, max_len=6):
    """English-pivot corpora with L2 as the low-resource language.

    Returns (train collection, dev collection). Directions: en<->l1 at
    ``high_pairs`` each, en<->l2 at ``low_pairs`` each.
    """
    rng = np.random.default_rng(seed)
    spec = [
        ("en", "l1", high_pairs), ("l1", "en", high_pairs),
        ("en", "l2", low_pairs), ("l2", "en", low_pairs),
    ]
    train = CorpusCollection([
        _make_corpus(s, t, n, n_words, rng, min_len, max_len)
        for s, t, n in spec])
    dev = CorpusCollection([
        _make_corpus(s, t, dev_pairs, n_words, rng, min_len, max_len)
        for s, t, _ in spec])
    return train, dev


def equivalent_pairs(n_words, lang_a, lang_b):
    """Ground-truth 1:1 dictionary pairs between two toy languages."""
    return {("%s%d" % (SURFACE[lang_a], k), "%s%d" % (SURFACE[lang_b], k))
            for k in range(n_words)}


def align_and_build_graph(collection, vocab, iterations=5,
                          strategy="intersect"):
    """Run the full aligner pipeline over a collection and build the merged
    equivalence graph: IBM1 both directions, Viterbi, symmetrize, count."""
    alignments = []
    for corpus in collection.corpora:
        fwd_table = train_ibm1(corpus, vocab, iterations)
        flipped = BitextCorpus(corpus.tgt_lang, corpus.src_lang,
                               [(t, s) for s, t in corpus.pairs])
        bwd_table = train_ibm1(flipped, vocab, iterations)
        fwd = align_corpus(fwd_table, corpus, vocab)
        bwd = [transpose(a) for a in align_corpus(bwd_table, flipped, vocab)]
        alignments.append([symmetrize(f, b, strategy)
                           for f, b in zip(fwd, bwd)])
    return build_graph(collection, alignments, vocab)


def toy_graph(train_collection, strategy="intersect", iterations=5):
    vocab = build_vocabulary(train_collection)
    return vocab, align_and_build_graph(train_collection, vocab,
                                        iterations, strategy)
