"""Evaluation machinery: cross-lingual cosine similarity with an isotropy
control, pivot-induced zero-shot dictionaries, and tokenized corpus BLEU."""

from __future__ import annotations

import math
import zlib
from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass
class BilingualDictionary:
    lang_a: str
    lang_b: str
    pairs: set  # set of (token_a, token_b)

    def __post_init__(self):
        self.pairs = set(self.pairs)

    def __len__(self):
        return len(self.pairs)

    @classmethod
    def load(cls, path, lang_a, lang_b):
        """MUSE convention: one 'word_a<TAB>word_b' per line."""
        pairs = set()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    fields = line.split()
                if len(fields) != 2:
                    raise ValueError("malformed dictionary line %r" % line)
                pairs.add((fields[0], fields[1]))
        return cls(lang_a, lang_b, pairs)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for a, b in sorted(self.pairs):
                f.write("%s\t%s\n" % (a, b))


@dataclass
class SimilarityReport:
    pair: str  # e.g. "en-de"
    mode: str  # "original" or "reparam"
    mean_similarity: float
    isotropy: float
    n_pairs: int
    seed: int


def _cosine(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("zero-norm embedding row")
    return float(np.dot(u, v) / (nu * nv))


def _surviving_pairs(vocab, dictionary):
    pairs = sorted((a, b) for a, b in dictionary.pairs
                   if a in vocab and b in vocab)
    if not pairs:
        raise ValueError(
            "no %s-%s dictionary pairs survive the vocabulary intersection"
            % (dictionary.lang_a, dictionary.lang_b))
    return pairs


def pair_similarity(table, vocab, dictionary: BilingualDictionary) -> float:
    """Mean cosine similarity over dictionary pairs present in the vocabulary."""
    sims = [_cosine(table[vocab.lookup(a)], table[vocab.lookup(b)])
            for a, b in _surviving_pairs(vocab, dictionary)]
    return float(np.mean(sims))


def isotropy(table, vocab, dictionary: BilingualDictionary,
             n_samples: int = 50, seed: int = 0,
             include_reserved: bool = True) -> float:
    """Space-bias control: for each surviving source word, the mean cosine to
    ``n_samples`` uniformly random vocabulary rows; averaged over words.
    Near zero means an unbiased space."""
    rng = np.random.default_rng(seed)
    candidates = np.arange(len(vocab))
    if not include_reserved:
        reserved = set(vocab.reserved_indices())
        candidates = np.array([i for i in candidates if i not in reserved])
    sources = sorted({a for a, _ in _surviving_pairs(vocab, dictionary)})
    scores = []
    for word in sources:
        i = vocab.lookup(word)
        draws = rng.choice(candidates, size=n_samples, replace=True)
        scores.append(np.mean([_cosine(table[i], table[j]) for j in draws]))
    return float(np.mean(scores))


def induce_zero_shot_dict(d_en_a: BilingualDictionary,
                          d_en_b: BilingualDictionary) -> BilingualDictionary:
    """Join two English-centric dictionaries on their English side:
    {(w_a, w_b) : exists e with (e, w_a) and (e, w_b)}."""
    if d_en_a.lang_a != d_en_b.lang_a:
        raise ValueError(
            "pivot side mismatch: %r vs %r" % (d_en_a.lang_a, d_en_b.lang_a))
    by_pivot = {}
    for e, w in d_en_a.pairs:
        by_pivot.setdefault(e, []).append(w)
    pairs = set()
    for e, w_b in d_en_b.pairs:
        for w_a in by_pivot.get(e, ()):
            pairs.add((w_a, w_b))
    return BilingualDictionary(d_en_a.lang_b, d_en_b.lang_b, pairs)


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses, references, max_order: int = 4) -> float:
    """Corpus-level tokenized BLEU: uniform 4-gram weights, brevity penalty,
    no smoothing. Returns a value in [0, 100]."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis / reference count mismatch")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len, ref_len = 0, 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_counts = _ngram_counts(hyp, n)
            ref_counts = _ngram_counts(ref, n)
            totals[n - 1] += max(len(hyp) - n + 1, 0)
            for gram, count in hyp_counts.items():
                matches[n - 1] += min(count, ref_counts.get(gram, 0))
    if any(t == 0 for t in totals) or any(m == 0 for m in matches):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals))
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return 100.0 * bp * math.exp(log_precision / max_order)


def similarity_suite(model, dictionaries, mode: str, seed: int = 0,
                     n_samples: int = 50):
    """Similarity + isotropy per dictionary on either the original or the
    re-parameterized embedding table."""
    if mode not in ("original", "reparam"):
        raise ValueError("mode must be 'original' or 'reparam'")
    if mode == "reparam" and not model.has_stack():
        raise ValueError("reparam mode requires a model with a graph stack")
    if mode == "original":
        table = model.embed.detach().numpy().astype(np.float64)
    else:
        table = model.reparam_table().detach().numpy().astype(np.float64)
    reports = []
    for dictionary in dictionaries:
        pair = "%s-%s" % (dictionary.lang_a, dictionary.lang_b)
        dict_seed = seed + (zlib.crc32(pair.encode()) % 1000)
        reports.append(SimilarityReport(
            pair=pair,
            mode=mode,
            mean_similarity=pair_similarity(table, model.vocab, dictionary),
            isotropy=isotropy(table, model.vocab, dictionary,
                              n_samples=n_samples, seed=dict_seed),
            n_pairs=len(_surviving_pairs(model.vocab, dictionary)),
            seed=dict_seed,
        ))
    return reports
