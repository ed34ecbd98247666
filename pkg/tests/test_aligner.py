import random

import pytest

from graphmerge.aligner import (
    NULL,
    align_corpus,
    corpus_log_likelihood,
    emit_pharaoh,
    load_pharaoh_file,
    parse_pharaoh,
    save_pharaoh_file,
    symmetrize,
    train_ibm1,
    viterbi_align,
)
from graphmerge.corpus import BitextCorpus, CorpusCollection, build_vocabulary


def two_pair_corpus():
    return BitextCorpus("xx", "yy", [(["a", "b"], ["x", "y"]), (["a"], ["x"])])


def vocab_for(corpus):
    return build_vocabulary(CorpusCollection([corpus]))


class TestIBM1:
    def test_cooccurrence_wins(self):
        corpus = two_pair_corpus()
        vocab = vocab_for(corpus)
        table = train_ibm1(corpus, vocab, iterations=5)
        a = vocab.lookup("a")
        assert table.prob(a, vocab.lookup("x")) > table.prob(a, vocab.lookup("y"))

    def test_single_pair_null(self):
        corpus = BitextCorpus("xx", "yy", [(["a"], ["x"])])
        vocab = vocab_for(corpus)
        table = train_ibm1(corpus, vocab, iterations=1)
        a = vocab.lookup("a")
        assert table.prob(a, vocab.lookup("x")) >= table.prob(a, NULL)

    def test_zero_iterations_rejected(self):
        corpus = two_pair_corpus()
        with pytest.raises(ValueError):
            train_ibm1(corpus, vocab_for(corpus), iterations=0)

    def test_rows_normalized(self):
        corpus = two_pair_corpus()
        vocab = vocab_for(corpus)
        table = train_ibm1(corpus, vocab, iterations=3)
        for row in table.probs.values():
            assert sum(row.values()) == pytest.approx(1.0, abs=1e-9)

    def test_monotone_log_likelihood(self):
        corpus = BitextCorpus("xx", "yy", [
            (["a", "b"], ["x", "y"]),
            (["b", "c"], ["y", "z"]),
            (["a"], ["x"]),
            (["c", "a"], ["z", "x"]),
            (["b"], ["y"]),
        ])
        vocab = vocab_for(corpus)
        previous = None
        for iters in range(1, 6):
            table = train_ibm1(corpus, vocab, iterations=iters)
            ll = corpus_log_likelihood(table, corpus, vocab)
            if previous is not None:
                assert ll >= previous - 1e-9
            previous = ll

    def test_sharded_em_matches_serial(self):
        corpus = BitextCorpus("xx", "yy", [
            (["a", "b"], ["x", "y"]),
            (["b", "c"], ["y", "z"]),
            (["a"], ["x"]),
        ])
        vocab = vocab_for(corpus)
        t1 = train_ibm1(corpus, vocab, iterations=4, shards=1)
        t3 = train_ibm1(corpus, vocab, iterations=4, shards=3)
        for e, row in t1.probs.items():
            for f, p in row.items():
                assert t3.prob(f, e) == pytest.approx(p, abs=1e-12)


class TestViterbi:
    def test_trained_alignment(self):
        corpus = two_pair_corpus()
        vocab = vocab_for(corpus)
        table = train_ibm1(corpus, vocab, iterations=5)
        links = viterbi_align(table, ["a", "b"], ["x", "y"], vocab)
        assert links == {(0, 0), (1, 1)}

    def test_null_dominates_drops_link(self):
        corpus = BitextCorpus("xx", "yy", [(["a"], ["x"])])
        vocab = vocab_for(corpus)
        from graphmerge.aligner import LexicalTable

        a = vocab.lookup("a")
        table = LexicalTable({NULL: {a: 0.9}, vocab.lookup("x"): {a: 0.1}})
        assert viterbi_align(table, ["a"], ["x"], vocab) == set()

    def test_tie_takes_smallest_j(self):
        corpus = BitextCorpus("xx", "yy", [(["a"], ["x", "x"])])
        vocab = vocab_for(corpus)
        from graphmerge.aligner import LexicalTable

        table = LexicalTable({vocab.lookup("x"): {vocab.lookup("a"): 1.0}})
        assert viterbi_align(table, ["a"], ["x", "x"], vocab) == {(0, 0)}

    def test_align_corpus_length(self):
        corpus = two_pair_corpus()
        vocab = vocab_for(corpus)
        table = train_ibm1(corpus, vocab, iterations=2)
        assert len(align_corpus(table, corpus, vocab)) == len(corpus)


class TestSymmetrize:
    FWD = {(0, 0), (1, 1)}
    BWD = {(0, 0)}

    def test_intersect(self):
        assert symmetrize(self.FWD, self.BWD, "intersect") == {(0, 0)}

    def test_union(self):
        assert symmetrize(self.FWD, self.BWD, "union") == {(0, 0), (1, 1)}

    def test_gdfa_grows_diagonal(self):
        # (1,1) is in the union and diagonal-adjacent to the intersection (0,0)
        assert symmetrize(self.FWD, self.BWD, "gdfa") == {(0, 0), (1, 1)}

    def test_gdfa_final_and(self):
        # (5,5) is not adjacent to anything but both its endpoints are unaligned
        fwd = {(0, 0), (5, 5)}
        bwd = {(0, 0)}
        assert symmetrize(fwd, bwd, "gdfa") == {(0, 0), (5, 5)}

    def test_gdfa_final_and_respects_aligned_endpoints(self):
        # (0,3) shares source position 0 with an aligned link and is not
        # adjacent to it, so final-and must not add it
        fwd = {(0, 0), (0, 3)}
        bwd = {(0, 0)}
        assert symmetrize(fwd, bwd, "gdfa") == {(0, 0)}

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            symmetrize(self.FWD, self.BWD, "bogus")

    def test_idempotent_on_equal_inputs(self):
        a = {(0, 1), (2, 2), (4, 0)}
        for strategy in ("intersect", "union", "gdfa"):
            assert symmetrize(a, a, strategy) == a

    def test_subset_chain_random(self):
        rng = random.Random(17)
        for _ in range(1000):
            fwd = {(rng.randrange(6), rng.randrange(6))
                   for _ in range(rng.randrange(8))}
            bwd = {(rng.randrange(6), rng.randrange(6))
                   for _ in range(rng.randrange(8))}
            inter = symmetrize(fwd, bwd, "intersect")
            gdfa = symmetrize(fwd, bwd, "gdfa")
            union = symmetrize(fwd, bwd, "union")
            assert inter <= gdfa <= union


class TestPharaoh:
    def test_parse(self):
        assert parse_pharaoh("0-0 1-2") == {(0, 0), (1, 2)}

    def test_empty(self):
        assert parse_pharaoh("") == set()

    def test_duplicates_collapse(self):
        assert parse_pharaoh("0-0 0-0") == {(0, 0)}

    def test_malformed(self):
        for bad in ("0-0 x-1", "0", "1-2-3", "-1-2"):
            with pytest.raises(ValueError):
                parse_pharaoh(bad)

    def test_roundtrip(self):
        rng = random.Random(5)
        for _ in range(200):
            a = {(rng.randrange(10), rng.randrange(10))
                 for _ in range(rng.randrange(10))}
            assert parse_pharaoh(emit_pharaoh(a)) == a

    def test_emit_sorted(self):
        assert emit_pharaoh({(2, 0), (0, 1), (0, 0)}) == "0-0 0-1 2-0"

    def test_file_roundtrip(self, tmp_path):
        alignments = [{(0, 0)}, set(), {(1, 2), (0, 1)}]
        path = tmp_path / "a.align"
        save_pharaoh_file(alignments, path, header_comments=["strategy: gdfa"])
        assert load_pharaoh_file(path) == alignments
        assert path.read_text().startswith("# strategy: gdfa")
