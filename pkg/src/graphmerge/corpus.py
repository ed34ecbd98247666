"""Parallel corpus loading, shared vocabulary, and temperature sampling.

Input files are pre-tokenized: one sentence pair per line, tab-separated,
tokens separated by single spaces.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

# A sentence is an ordered list of subword token strings.
Sentence = list

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)


def lang_tag(code: str) -> str:
    """Language-tag token for a target language code, e.g. 'de' -> '<2DE>'."""
    return "<2%s>" % code.upper()


@dataclass
class BitextCorpus:
    src_lang: str
    tgt_lang: str
    pairs: list  # list of (src Sentence, tgt Sentence)
    skipped: int = 0  # malformed / empty lines rejected during loading

    def __post_init__(self):
        if self.src_lang == self.tgt_lang:
            raise ValueError("src_lang and tgt_lang must differ: %r" % self.src_lang)
        if not self.pairs:
            raise ValueError(
                "empty corpus for %s-%s" % (self.src_lang, self.tgt_lang)
            )

    def __len__(self):
        return len(self.pairs)


@dataclass
class CorpusCollection:
    corpora: list  # list of BitextCorpus

    def __post_init__(self):
        seen = set()
        for c in self.corpora:
            key = (c.src_lang, c.tgt_lang)
            if key in seen:
                raise ValueError("duplicate corpus for direction %s-%s" % key)
            seen.add(key)

    @property
    def languages(self):
        langs = set()
        for c in self.corpora:
            langs.add(c.src_lang)
            langs.add(c.tgt_lang)
        return langs

    @property
    def target_languages(self):
        return {c.tgt_lang for c in self.corpora}

    def __len__(self):
        return len(self.corpora)


class Vocabulary:
    """Shared subword inventory: specials, then language tags, then tokens in
    first-occurrence order. Indices are dense 0..|V|-1."""

    def __init__(self, tokens, lang_tags):
        self.tokens = list(tokens)
        self.lang_tags = dict(lang_tags)  # language code -> tag token
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        for tag in self.lang_tags.values():
            if tag not in self._index:
                raise ValueError("language tag %r missing from tokens" % tag)

    def __len__(self):
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        """Index of a token; unknown tokens map to <unk>."""
        return self._index.get(token, self.unk)

    def __contains__(self, token):
        return token in self._index

    def token_of(self, i: int) -> str:
        return self.tokens[i]

    @property
    def pad(self):
        return self._index[PAD]

    @property
    def bos(self):
        return self._index[BOS]

    @property
    def eos(self):
        return self._index[EOS]

    @property
    def unk(self):
        return self._index[UNK]

    def special_indices(self):
        return {tok: self._index[tok] for tok in SPECIALS}

    def tag_index(self, lang: str) -> int:
        return self._index[self.lang_tags[lang]]

    def reserved_indices(self):
        """Indices of special tokens and language tags (non-lexical rows)."""
        out = [self._index[tok] for tok in SPECIALS]
        out.extend(self._index[tag] for tag in self.lang_tags.values())
        return sorted(out)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write("# graphmerge vocabulary v1\n")
            f.write("# specials: %s\n" % " ".join(
                "%s=%d" % (tok, self._index[tok]) for tok in SPECIALS))
            f.write("# lang_tags: %s\n" % " ".join(
                "%s=%s" % (code, tag) for code, tag in sorted(self.lang_tags.items())))
            for tok in self.tokens:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        tokens = []
        lang_tags = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if line.startswith("# lang_tags:"):
                    for item in line.split(":", 1)[1].split():
                        code, tag = item.split("=", 1)
                        lang_tags[code] = tag
                    continue
                if line.startswith("#"):
                    continue
                tokens.append(line)
        return cls(tokens, lang_tags)


def load_bitext(path, src_lang: str, tgt_lang: str) -> BitextCorpus:
    """Load a tab-separated pre-tokenized bitext file.

    Blank lines, lines without exactly two tab-separated fields, and lines
    with an empty side are rejected; the rejection count is kept in the
    corpus metadata.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    pairs = []
    skipped = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line.strip():
                skipped += 1
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                skipped += 1
                continue
            src = fields[0].split()
            tgt = fields[1].split()
            if not src or not tgt:
                skipped += 1
                continue
            pairs.append((src, tgt))
    return BitextCorpus(src_lang, tgt_lang, pairs, skipped=skipped)


def save_bitext(corpus: BitextCorpus, path):
    with open(path, "w", encoding="utf-8") as f:
        for src, tgt in corpus.pairs:
            f.write("%s\t%s\n" % (" ".join(src), " ".join(tgt)))


def build_vocabulary(collection: CorpusCollection) -> Vocabulary:
    """Union of all tokens over both sides of all corpora, plus specials and
    one language tag per target language. Deterministic ordering."""
    if not collection.corpora:
        raise ValueError("empty corpus collection")
    tags = {code: lang_tag(code) for code in sorted(collection.target_languages)}
    tokens = list(SPECIALS) + [tags[code] for code in sorted(tags)]
    seen = set(tokens)
    for corpus in collection.corpora:
        for src, tgt in corpus.pairs:
            for tok in src:
                if tok not in seen:
                    seen.add(tok)
                    tokens.append(tok)
            for tok in tgt:
                if tok not in seen:
                    seen.add(tok)
                    tokens.append(tok)
    return Vocabulary(tokens, tags)


def temperature_weights(sizes, temperature: float):
    """Sampling probabilities over language pairs: p_i proportional to
    (n_i / sum n)^(1/T), normalized to sum 1."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.size == 0 or np.any(sizes <= 0):
        raise ValueError("all corpus sizes must be positive")
    shares = sizes / sizes.sum()
    scaled = shares ** (1.0 / temperature)
    return (scaled / scaled.sum()).tolist()


def sample_batch(collection: CorpusCollection, weights, batch_size: int, seed: int):
    """Draw (corpus index, pair index) tuples: corpus per the given weights,
    pair uniform within the corpus. Deterministic for a fixed seed."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if len(weights) != len(collection.corpora):
        raise ValueError("weights length does not match corpus count")
    rng = np.random.default_rng(seed)
    return sample_batch_rng(collection, weights, batch_size, rng)


def sample_batch_rng(collection: CorpusCollection, weights, batch_size: int, rng):
    """Like sample_batch but drawing from a caller-owned Generator."""
    corpus_ids = rng.choice(len(collection.corpora), size=batch_size, p=weights)
    out = []
    for cid in corpus_ids:
        cid = int(cid)
        pid = int(rng.integers(len(collection.corpora[cid])))
        out.append((cid, pid))
    return out
