"""Cross-lingual equivalence graph built from alignment counts.

Per-corpus link counts are row-normalized into bilingual transfer-ratio
fragments, which are summed and re-normalized into one multilingual
row-stochastic |V|x|V| matrix. Rows without any alignment mass (including
special tokens and language tags) carry a pure 1.0 self-loop.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_MAGIC = b"EQGR"
_VERSION = 1


@dataclass
class CountMatrix:
    """Sparse alignment co-occurrence counts over vocabulary indices."""

    src_lang: str
    tgt_lang: str
    size: int
    counts: dict = field(default_factory=dict)  # (i, j) -> int

    def add(self, i: int, j: int, n: int = 1):
        self.counts[(i, j)] = self.counts.get((i, j), 0) + n


class GraphFragment:
    """One bilingual row-normalized fragment (alpha ratios); rows with no
    counts are simply absent."""

    def __init__(self, size: int, rows=None):
        self.size = size
        self.rows = rows if rows is not None else {}  # i -> {j: alpha}


class EquivalenceGraph:
    """Row-stochastic sparse transfer-ratio matrix over the shared vocabulary."""

    def __init__(self, matrix: sp.csr_matrix):
        matrix = matrix.tocsr()
        matrix.sort_indices()
        self.matrix = matrix

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def row(self, i: int):
        """Nonzero entries of row i as {column: alpha}."""
        start, end = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return {int(j): float(v) for j, v in
                zip(self.matrix.indices[start:end], self.matrix.data[start:end])}

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def is_self_loop_row(self, i: int) -> bool:
        return self.row(i) == {i: 1.0}

    def __eq__(self, other):
        if not isinstance(other, EquivalenceGraph):
            return NotImplemented
        a, b = self.matrix, other.matrix
        return (a.shape == b.shape
                and np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data, b.data))


def accumulate_counts(corpus, alignments, vocab) -> CountMatrix:
    """Count aligned token pairs over a corpus: one increment per link."""
    if len(alignments) != len(corpus.pairs):
        raise ValueError(
            "alignment count %d does not match corpus size %d"
            % (len(alignments), len(corpus.pairs)))
    cm = CountMatrix(corpus.src_lang, corpus.tgt_lang, len(vocab))
    for (src, tgt), links in zip(corpus.pairs, alignments):
        for i, j in links:
            if not (0 <= i < len(src)) or not (0 <= j < len(tgt)):
                raise ValueError(
                    "link (%d, %d) out of bounds for sentence lengths (%d, %d)"
                    % (i, j, len(src), len(tgt)))
            cm.add(vocab.lookup(src[i]), vocab.lookup(tgt[j]))
    return cm


def normalize_bilingual(cm: CountMatrix) -> GraphFragment:
    """Row-normalize counts into transfer ratios: alpha_ij = e_ij / sum_k e_ik."""
    rows = {}
    for (i, j), n in cm.counts.items():
        rows.setdefault(i, {})[j] = float(n)
    for i, row in rows.items():
        total = sum(row.values())
        for j in row:
            row[j] /= total
    return GraphFragment(cm.size, rows)


def merge_graphs(fragments, reserved_rows=()) -> EquivalenceGraph:
    """Element-wise sum of fragments, then per-row re-normalization.

    Rows with no mass become pure self-loops, as do the ``reserved_rows``
    (special tokens and language tags) regardless of accumulated mass.
    """
    if not fragments:
        raise ValueError("no graph fragments to merge")
    size = fragments[0].size
    for frag in fragments:
        if frag.size != size:
            raise ValueError("fragments built over different vocabularies")
    reserved = set(reserved_rows)

    merged = {}
    for frag in fragments:
        for i, row in frag.rows.items():
            if i in reserved:
                continue
            acc = merged.setdefault(i, {})
            for j, a in row.items():
                acc[j] = acc.get(j, 0.0) + a

    indptr = [0]
    indices = []
    data = []
    for i in range(size):
        row = merged.get(i)
        if row:
            total = sum(row.values())
            for j in sorted(row):
                indices.append(j)
                data.append(row[j] / total)
        else:
            indices.append(i)
            data.append(1.0)
        indptr.append(len(indices))
    matrix = sp.csr_matrix(
        (np.array(data, dtype=np.float64),
         np.array(indices, dtype=np.int64),
         np.array(indptr, dtype=np.int64)),
        shape=(size, size))
    return EquivalenceGraph(matrix)


def build_graph(collection, alignments_per_corpus, vocab) -> EquivalenceGraph:
    """Full pipeline: counts for both directions of every corpus, normalize,
    merge. Transfer is defined in both directions from one symmetrized
    alignment (row normalization indexes source-side rows)."""
    from .corpus import BitextCorpus

    fragments = []
    for corpus, alignments in zip(collection.corpora, alignments_per_corpus):
        fragments.append(normalize_bilingual(accumulate_counts(corpus, alignments, vocab)))
        flipped = BitextCorpus(
            corpus.tgt_lang, corpus.src_lang,
            [(tgt, src) for src, tgt in corpus.pairs])
        transposed = [{(j, i) for i, j in links} for links in alignments]
        fragments.append(normalize_bilingual(accumulate_counts(flipped, transposed, vocab)))
    return merge_graphs(fragments, reserved_rows=vocab.reserved_indices())


def khop_neighbors(g: EquivalenceGraph, i: int, k: int):
    """Vocabulary indices reachable from i within k edges of nonzero alpha;
    pure self-loop edges are not traversed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (0 <= i < g.size):
        raise IndexError("vocabulary index %d out of range" % i)
    reached = set()
    frontier = {i}
    for _ in range(k):
        nxt = set()
        for u in frontier:
            for v in g.row(u):
                if v != u:
                    nxt.add(v)
        nxt -= frontier
        new = nxt - reached
        reached |= nxt
        frontier = new
        if not frontier:
            break
    reached.discard(i)
    return reached


def save_graph(g: EquivalenceGraph, path):
    """Binary format: magic, version, |V|, nnz, payload checksum, then
    row-pointer / column-index / value arrays, little-endian, values f64."""
    indptr = np.asarray(g.matrix.indptr, dtype="<i8")
    indices = np.asarray(g.matrix.indices, dtype="<i8")
    data = np.asarray(g.matrix.data, dtype="<f8")
    payload = indptr.tobytes() + indices.tobytes() + data.tobytes()
    header = _MAGIC + struct.pack("<IQQI", _VERSION, g.size, g.nnz,
                                  zlib.crc32(payload))
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_graph(path) -> EquivalenceGraph:
    with open(path, "rb") as f:
        blob = f.read()
    head_len = 4 + struct.calcsize("<IQQI")
    if len(blob) < head_len or blob[:4] != _MAGIC:
        raise ValueError("not a graph file: %s" % path)
    version, size, nnz, checksum = struct.unpack("<IQQI", blob[4:head_len])
    if version != _VERSION:
        raise ValueError("unsupported graph file version %d" % version)
    payload = blob[head_len:]
    expected = (size + 1) * 8 + nnz * 8 + nnz * 8
    if len(payload) != expected:
        raise ValueError("truncated graph file: %s" % path)
    if zlib.crc32(payload) != checksum:
        raise ValueError("graph file checksum mismatch: %s" % path)
    off = 0
    indptr = np.frombuffer(payload, dtype="<i8", count=size + 1, offset=off)
    off += (size + 1) * 8
    indices = np.frombuffer(payload, dtype="<i8", count=nnz, offset=off)
    off += nnz * 8
    data = np.frombuffer(payload, dtype="<f8", count=nnz, offset=off)
    matrix = sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()),
                           shape=(size, size))
    return EquivalenceGraph(matrix)


def export_tsv(g: EquivalenceGraph, path, header_comments=()):
    """Human-readable 'i<TAB>j<TAB>alpha' dump."""
    with open(path, "w", encoding="utf-8") as f:
        for comment in header_comments:
            f.write("# %s\n" % comment)
        coo = g.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for idx in order:
            f.write("%d\t%d\t%.17g\n" % (coo.row[idx], coo.col[idx], coo.data[idx]))


def audit(g: EquivalenceGraph):
    """Row-stochasticity audit: (max |row sum - 1|, min entry, max entry)."""
    sums = g.row_sums()
    return (float(np.abs(sums - 1.0).max()),
            float(g.matrix.data.min()) if g.nnz else 1.0,
            float(g.matrix.data.max()) if g.nnz else 1.0)
