"""Built-in word aligner and alignment utilities.

A small IBM Model 1 EM aligner stands in for external tools; externally
produced alignments can be imported in Pharaoh ("i-j i-j ...") format.
Directional alignments are symmetrized with intersect / union /
grow-diag-final-and.
"""

from __future__ import annotations

import math
from collections import defaultdict

# A sentence alignment is a set of (i, j) position links, i into the source
# sentence, j into the target sentence.

NULL = -1  # virtual target-side NULL position used only inside EM/Viterbi

STRATEGIES = ("intersect", "union", "gdfa")


class LexicalTable:
    """Translation table t(src token | tgt token).

    Stored per target token: for every target token (including NULL) the
    probabilities over source tokens sum to 1, the classic Model 1
    normalization.
    """

    def __init__(self, probs):
        self.probs = probs  # dict tgt_idx -> dict src_idx -> float

    def prob(self, src_idx: int, tgt_idx: int) -> float:
        return self.probs.get(tgt_idx, {}).get(src_idx, 0.0)

    def row(self, tgt_idx: int):
        return self.probs.get(tgt_idx, {})


def _indexed_pairs(corpus, vocab):
    out = []
    for src, tgt in corpus.pairs:
        out.append(([vocab.lookup(t) for t in src], [vocab.lookup(t) for t in tgt]))
    return out


def train_ibm1(corpus, vocab, iterations: int, shards: int = 1) -> LexicalTable:
    """IBM Model 1 EM over one bitext corpus.

    Each source token is generated by one target token or the target-side
    NULL token; t(src | tgt) is normalized over source tokens per target
    token. Initialization is uniform over co-occurring tokens, so the result
    is deterministic. ``shards`` only splits the expectation step; the
    reduction result is identical for any shard count.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    pairs = _indexed_pairs(corpus, vocab)

    cooc = defaultdict(set)
    for src, tgt in pairs:
        for e in tgt + [NULL]:
            cooc[e].update(src)
    t = {e: {f: 1.0 / len(srcs) for f in srcs} for e, srcs in cooc.items()}

    for _ in range(iterations):
        shard_counts = [defaultdict(float) for _ in range(max(1, shards))]
        for n, (src, tgt) in enumerate(pairs):
            counts = shard_counts[n % len(shard_counts)]
            cands = tgt + [NULL]
            for f in src:
                total = sum(t[e][f] for e in cands)
                for e in cands:
                    counts[(e, f)] += t[e][f] / total
        counts = defaultdict(float)
        for shard in shard_counts:
            for key, val in shard.items():
                counts[key] += val
        totals = defaultdict(float)
        for (e, f), val in counts.items():
            totals[e] += val
        t = {e: {} for e in t}
        for (e, f), val in counts.items():
            t[e][f] = val / totals[e]
    return LexicalTable(t)


def corpus_log_likelihood(table: LexicalTable, corpus, vocab) -> float:
    """Log-likelihood of the corpus under IBM Model 1 with uniform alignment
    prior; monotone non-decreasing over EM iterations."""
    ll = 0.0
    for src, tgt in _indexed_pairs(corpus, vocab):
        cands = tgt + [NULL]
        for s in src:
            p = sum(table.prob(s, j) for j in cands) / len(cands)
            ll += math.log(max(p, 1e-300))
    return ll


def viterbi_align(table: LexicalTable, src, tgt, vocab):
    """Hard alignment: each source position links to its argmax-probability
    target position. Links won by NULL are dropped; position ties go to the
    smallest j; NULL wins only strictly."""
    links = set()
    src_idx = [vocab.lookup(tok) for tok in src]
    tgt_idx = [vocab.lookup(tok) for tok in tgt]
    for i, s in enumerate(src_idx):
        best_j, best_p = None, -1.0
        for j, tj in enumerate(tgt_idx):
            p = table.prob(s, tj)
            if p > best_p:
                best_j, best_p = j, p
        if best_j is not None and table.prob(s, NULL) <= best_p:
            links.add((i, best_j))
    return links


def align_corpus(table: LexicalTable, corpus, vocab):
    """Viterbi-align every pair of a corpus."""
    return [viterbi_align(table, src, tgt, vocab) for src, tgt in corpus.pairs]


def transpose(alignment):
    return {(j, i) for i, j in alignment}


_NEIGHBORHOOD = [(-1, -1), (-1, 0), (-1, 1), (0, -1),
                 (0, 1), (1, -1), (1, 0), (1, 1)]


def _grow_diag_final_and(fwd, bwd):
    union = fwd | bwd
    links = set(fwd & bwd)
    aligned_i = {i for i, _ in links}
    aligned_j = {j for _, j in links}

    # grow-diag: repeatedly add union links adjacent (8-neighborhood) to an
    # existing link when one of their endpoints is still unaligned
    changed = True
    while changed:
        changed = False
        for i, j in sorted(union - links):
            if i not in aligned_i or j not in aligned_j:
                for di, dj in _NEIGHBORHOOD:
                    if (i + di, j + dj) in links:
                        links.add((i, j))
                        aligned_i.add(i)
                        aligned_j.add(j)
                        changed = True
                        break

    # final-and: union links with both endpoints unaligned
    for i, j in sorted(union - links):
        if i not in aligned_i and j not in aligned_j:
            links.add((i, j))
            aligned_i.add(i)
            aligned_j.add(j)
    return links


def symmetrize(fwd, bwd, strategy: str):
    """Combine forward and backward alignments. ``bwd`` must already be in
    source-major (i, j) order."""
    fwd, bwd = set(fwd), set(bwd)
    if strategy == "intersect":
        return fwd & bwd
    if strategy == "union":
        return fwd | bwd
    if strategy == "gdfa":
        return _grow_diag_final_and(fwd, bwd)
    raise ValueError("unknown symmetrization strategy %r" % strategy)


def parse_pharaoh(line: str):
    """Parse one Pharaoh line ('0-0 1-2 ...') into a link set."""
    links = set()
    for token in line.split():
        parts = token.split("-")
        if len(parts) != 2:
            raise ValueError("malformed alignment token %r" % token)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError("malformed alignment token %r" % token)
        if i < 0 or j < 0:
            raise ValueError("negative index in alignment token %r" % token)
        links.add((i, j))
    return links


def emit_pharaoh(alignment) -> str:
    """Serialize a link set; links in lexicographic order."""
    return " ".join("%d-%d" % (i, j) for i, j in sorted(alignment))


def load_pharaoh_file(path):
    """Read one alignment per line; lines starting with '#' are comments."""
    alignments = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.startswith("#"):
                continue
            alignments.append(parse_pharaoh(line.rstrip("\n")))
    return alignments


def save_pharaoh_file(alignments, path, header_comments=()):
    with open(path, "w", encoding="utf-8") as f:
        for comment in header_comments:
            f.write("# %s\n" % comment)
        for a in alignments:
            f.write(emit_pharaoh(a) + "\n")
