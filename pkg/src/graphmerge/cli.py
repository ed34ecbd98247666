"""Command-line entry point.

Subcommands: align, graph, train, analyze, bench. Exit codes: 0 on success,
1 on validation errors (bad flags, malformed or mismatched inputs), 2 on
runtime failures (divergence, audit failure, I/O errors mid-run).
Model settings come from an optional JSON config file; explicit flags win.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import __version__, graph as graphmod
from .aligner import (
    align_corpus,
    load_pharaoh_file,
    save_pharaoh_file,
    symmetrize,
    train_ibm1,
    transpose,
)
from .analysis import BilingualDictionary, bleu, induce_zero_shot_dict, similarity_suite
from .bench import run_benchmark
from .corpus import BitextCorpus, CorpusCollection, Vocabulary, build_vocabulary, load_bitext
from .nmt import ModelConfig, TranslationModel
from .reports import write_bench_report, write_csv, write_similarity_report, write_training_report
from .training import TrainingDiverged, load_checkpoint, restore_model, save_checkpoint, train


class ValidationError(ValueError):
    """Bad inputs detected before any work is done (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors per the exit-code contract
    def error(self, message):
        self.print_usage(sys.stderr)
        print("%s: error: %s" % (self.prog, message), file=sys.stderr)
        sys.exit(1)


def _parse_bitext_spec(spec):
    parts = spec.split(":", 2)
    if len(parts) != 3:
        raise ValidationError(
            "bitext spec must be SRC:TGT:PATH, got %r" % spec)
    return parts[0], parts[1], parts[2]


def _load_collection(specs):
    corpora = []
    for spec in specs:
        src, tgt, path = _parse_bitext_spec(spec)
        if not os.path.exists(path):
            raise ValidationError("bitext file not found: %s" % path)
        corpora.append(load_bitext(path, src, tgt))
    return CorpusCollection(corpora)


def _atomic_writes(writes):
    """Run (path, write_fn) pairs via temp files, then rename all at once so
    a failure leaves no partial outputs behind."""
    staged = []
    try:
        for path, fn in writes:
            tmp = path + ".tmp"
            fn(tmp)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.remove(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def _provenance(config, seed):
    return {"config_hash": config.config_hash(), "seed": seed,
            "version": __version__}


def _model_config(args):
    """Config file (or preset) plus explicit flag overrides; flags win."""
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ValidationError("config file not found: %s" % args.config)
        config = ModelConfig.from_file(args.config)
    elif getattr(args, "preset", None):
        config = ModelConfig.preset(args.preset)
    else:
        config = ModelConfig()
    overrides = {}
    for name in ("hops", "tie_mode", "max_steps", "batch_size", "peak_lr",
                 "warmup_steps", "eval_interval", "patience", "temperature",
                 "max_len", "dropout", "freeze_graph_stack"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    try:
        return dataclasses.replace(config, **overrides)
    except ValueError as exc:
        raise ValidationError(str(exc))


# --------------------------------------------------------------------------
# align


def cmd_align(args):
    collection = _load_collection(args.bitext)
    import_mode = bool(args.forward or args.backward)
    if import_mode:
        if not (args.forward and args.backward):
            raise ValidationError(
                "import mode needs both --forward and --backward")
        if len(collection.corpora) != 1:
            raise ValidationError("import mode takes exactly one --bitext")

    os.makedirs(args.out, exist_ok=True)
    writes = []
    for corpus in collection.corpora:
        if import_mode:
            fwd = load_pharaoh_file(args.forward)
            bwd = load_pharaoh_file(args.backward)
            for name, alignment in (("--forward", fwd), ("--backward", bwd)):
                if len(alignment) != len(corpus):
                    raise ValidationError(
                        "%s has %d lines but the bitext has %d"
                        % (name, len(alignment), len(corpus)))
        else:
            vocab = build_vocabulary(CorpusCollection([corpus]))
            fwd_table = train_ibm1(corpus, vocab, args.iterations)
            flipped = BitextCorpus(corpus.tgt_lang, corpus.src_lang,
                                   [(t, s) for s, t in corpus.pairs])
            bwd_table = train_ibm1(flipped, vocab, args.iterations)
            fwd = align_corpus(fwd_table, corpus, vocab)
            bwd = [transpose(a) for a in align_corpus(bwd_table, flipped, vocab)]
        sym = [symmetrize(f, b, args.strategy) for f, b in zip(fwd, bwd)]

        stem = os.path.join(args.out, "%s-%s" % (corpus.src_lang, corpus.tgt_lang))
        comments = ["graphmerge %s" % __version__,
                    "pair: %s-%s" % (corpus.src_lang, corpus.tgt_lang),
                    "strategy: %s" % args.strategy]
        writes += [
            (stem + ".fwd.align",
             lambda p, a=fwd, c=comments: save_pharaoh_file(a, p, c)),
            (stem + ".bwd.align",
             lambda p, a=bwd, c=comments: save_pharaoh_file(a, p, c)),
            (stem + ".sym.align",
             lambda p, a=sym, c=comments: save_pharaoh_file(a, p, c)),
        ]
    _atomic_writes(writes)
    for path, _ in writes:
        print("wrote %s" % path)
    return 0


# --------------------------------------------------------------------------
# graph


def cmd_graph(args):
    collection = _load_collection(args.bitext)
    if len(args.alignments) != len(args.bitext):
        raise ValidationError(
            "need one --alignments file per --bitext (got %d vs %d)"
            % (len(args.alignments), len(args.bitext)))
    vocab = build_vocabulary(collection)
    alignments_per_corpus = []
    for corpus, path in zip(collection.corpora, args.alignments):
        if not os.path.exists(path):
            raise ValidationError("alignment file not found: %s" % path)
        alignments = load_pharaoh_file(path)
        if len(alignments) != len(corpus):
            raise ValidationError(
                "%s has %d lines but its bitext has %d"
                % (path, len(alignments), len(corpus)))
        alignments_per_corpus.append(alignments)

    g = graphmod.build_graph(collection, alignments_per_corpus, vocab)
    max_dev, min_entry, max_entry = graphmod.audit(g)
    print("row-stochasticity audit: max |row sum - 1| = %.3g, "
          "entries in [%.3g, %.3g]" % (max_dev, min_entry, max_entry))
    if max_dev > 1e-9:
        raise RuntimeError("row-stochasticity audit failed (%.3g)" % max_dev)

    self_loops = sum(g.is_self_loop_row(i) for i in range(g.size))
    print("vocabulary %d rows, %d nonzeros, %d pure self-loop rows"
          % (g.size, g.nnz, self_loops))
    if self_loops == g.size:
        print("warning: graph contains only self-loops "
              "(empty or degenerate alignments)", file=sys.stderr)
    pivot = args.pivot
    if pivot:
        cross = _non_pivot_cross_edges(g, vocab, collection, pivot)
        print("non-%s x non-%s direct edges: %d" % (pivot, pivot, cross))

    writes = [(args.out, lambda p: graphmod.save_graph(g, p))]
    if args.tsv:
        comments = ["graphmerge %s" % __version__, "source graph: %s" % args.out]
        writes.append((args.tsv,
                       lambda p: graphmod.export_tsv(g, p, comments)))
    if args.vocab_out:
        writes.append((args.vocab_out, vocab.save))
    _atomic_writes(writes)
    for path, _ in writes:
        print("wrote %s" % path)
    return 0


def _non_pivot_cross_edges(g, vocab, collection, pivot):
    """Count direct edges between two different non-pivot languages."""
    lang_of = {}
    for corpus in collection.corpora:
        for src, tgt in corpus.pairs:
            for tok in src:
                lang_of.setdefault(vocab.lookup(tok), corpus.src_lang)
            for tok in tgt:
                lang_of.setdefault(vocab.lookup(tok), corpus.tgt_lang)
    count = 0
    for i in range(g.size):
        li = lang_of.get(i)
        if li is None or li == pivot:
            continue
        for j in g.row(i):
            lj = lang_of.get(j)
            if j != i and lj is not None and lj not in (pivot, li):
                count += 1
    return count


# --------------------------------------------------------------------------
# train


def cmd_train(args):
    config = _model_config(args)
    train_coll = _load_collection(args.bitext)
    dev_coll = _load_collection(args.dev_bitext)
    vocab = Vocabulary.load(args.vocab) if args.vocab \
        else build_vocabulary(train_coll)
    g = None
    if config.hops > 0:
        if not args.graph:
            raise ValidationError("hops > 0 requires --graph")
        g = graphmod.load_graph(args.graph)
        if g.size != len(vocab):
            raise ValidationError(
                "graph has %d rows but the vocabulary has %d"
                % (g.size, len(vocab)))

    model = TranslationModel(config, vocab, graph=g, seed=args.seed)
    result = train(model, train_coll, dev_coll, config, seed=args.seed)
    print("best step %d, dev loss %.4f, dev token accuracy %.4f"
          % (result.best_step, result.best_dev_loss, result.best_dev_accuracy))

    os.makedirs(args.out, exist_ok=True)
    meta = _provenance(config, args.seed)
    ckpt_path = os.path.join(args.out, "checkpoint.pkl")
    log_path = os.path.join(args.out, "train_log.csv")
    _atomic_writes([
        (ckpt_path, lambda p: save_checkpoint(result.checkpoint, p)),
        (log_path, lambda p: write_training_report(p, result, meta)),
    ])
    print("wrote %s" % ckpt_path)
    print("wrote %s" % log_path)
    return 0


# --------------------------------------------------------------------------
# analyze


def _parse_dict_spec(spec):
    parts = spec.split(":", 2)
    if len(parts) != 3:
        raise ValidationError(
            "dictionary spec must be LANGA:LANGB:PATH, got %r" % spec)
    if not os.path.exists(parts[2]):
        raise ValidationError("dictionary file not found: %s" % parts[2])
    return BilingualDictionary.load(parts[2], parts[0], parts[1])


def _restore(args, config_overrides=()):
    if not os.path.exists(args.checkpoint):
        raise ValidationError("checkpoint not found: %s" % args.checkpoint)
    payload = load_checkpoint(args.checkpoint)
    config = ModelConfig(**payload["config"])
    vocab = Vocabulary.load(args.vocab)
    g = None
    if config.hops > 0:
        if not args.graph:
            raise ValidationError(
                "checkpoint was trained with hops > 0; pass --graph")
        g = graphmod.load_graph(args.graph)
    model = TranslationModel(config, vocab, graph=g, seed=payload["seed"])
    restore_model(model, payload)
    model.eval()
    return model, config, payload


def cmd_analyze(args):
    model, config, payload = _restore(args)
    dictionaries = [_parse_dict_spec(s) for s in args.dict]

    # pivot-join any two dictionaries that share their first language
    induced = []
    for i in range(len(dictionaries)):
        for j in range(i + 1, len(dictionaries)):
            a, b = dictionaries[i], dictionaries[j]
            if a.lang_a == b.lang_a and a.lang_b != b.lang_b:
                induced.append(induce_zero_shot_dict(a, b))
    if induced:
        print("induced %d zero-shot dictionaries via pivot join"
              % len(induced))

    reports = []
    for mode in ("original", "reparam"):
        if mode == "reparam" and not model.has_stack():
            continue
        reports += similarity_suite(model, dictionaries + induced, mode,
                                    seed=args.seed)

    os.makedirs(args.out, exist_ok=True)
    meta = _provenance(config, args.seed)
    writes = []
    if reports:
        sim_path = os.path.join(args.out, "similarity.csv")
        writes.append((sim_path,
                       lambda p: write_similarity_report(p, reports, meta)))

    bleu_rows = []
    if args.test_bitext:
        for spec in args.test_bitext:
            src, tgt, path = _parse_bitext_spec(spec)
            corpus = load_bitext(path, src, tgt)
            hyps = [model.greedy_decode(s, tgt, max_len=config.max_len)
                    for s, _ in corpus.pairs]
            refs = [r for _, r in corpus.pairs]
            score = bleu(hyps, refs)
            bleu_rows.append(("%s-%s" % (src, tgt), len(corpus),
                              "%.2f" % score))
            print("BLEU %s-%s: %.2f (%d sentences)" % (src, tgt, score,
                                                       len(corpus)))
        bleu_path = os.path.join(args.out, "bleu.csv")
        writes.append((bleu_path,
                       lambda p: write_csv(p, ("pair", "n_sentences", "bleu"),
                                           bleu_rows, meta)))
    if not writes:
        raise ValidationError("nothing to analyze: pass --dict and/or "
                              "--test-bitext")
    _atomic_writes(writes)
    for path, _ in writes:
        print("wrote %s" % path)
    return 0


# --------------------------------------------------------------------------
# bench


def cmd_bench(args):
    config = _model_config(args)
    collection = _load_collection(args.bitext)
    vocab = Vocabulary.load(args.vocab) if args.vocab \
        else build_vocabulary(collection)
    g = graphmod.load_graph(args.graph)
    hops_list = tuple(int(h) for h in args.hops_list.split(","))
    batch_sizes = tuple(int(b) for b in args.batch_sizes.split(","))
    if 0 not in hops_list:
        raise ValidationError("--hops-list must include 0 (the baseline)")

    results = run_benchmark(collection, vocab, g, config,
                            hops_list=hops_list, batch_sizes=batch_sizes,
                            steps=args.steps, seed=args.seed)
    for r in results:
        print("%-10s batch %-4d wps %10.1f  time/step %.4fs  ratio %.2f  "
              "graph path %.4fs"
              % (r.variant, r.batch_size, r.wps, r.time_per_step,
                 r.time_ratio, r.graph_time_per_step))
    meta = _provenance(config, args.seed)
    _atomic_writes([(args.out,
                     lambda p: write_bench_report(p, results, meta))])
    print("wrote %s" % args.out)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser():
    parser = _Parser(prog="graphmerge",
                     description="Cross-lingual equivalence-graph embedding "
                                 "re-parameterization pipeline")
    parser.add_argument("--version", action="version",
                        version="graphmerge %s" % __version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("align", help="train or import word alignments")
    p.add_argument("--bitext", action="append", required=True,
                   metavar="SRC:TGT:PATH")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--strategy", default="gdfa",
                   choices=("intersect", "union", "gdfa"))
    p.add_argument("--forward", help="import: forward Pharaoh file")
    p.add_argument("--backward", help="import: backward Pharaoh file")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("graph", help="build the merged equivalence graph")
    p.add_argument("--bitext", action="append", required=True,
                   metavar="SRC:TGT:PATH")
    p.add_argument("--alignments", action="append", required=True,
                   help="symmetrized Pharaoh file, one per --bitext")
    p.add_argument("--pivot", default="en",
                   help="pivot language for the cross-edge report"
                        " (empty string disables)")
    p.add_argument("--out", required=True, help="binary graph output path")
    p.add_argument("--tsv", help="optional human-readable dump")
    p.add_argument("--vocab-out", dest="vocab_out",
                   help="write the vocabulary file here")
    common(p)
    p.set_defaults(fn=cmd_graph)

    def model_flags(p):
        p.add_argument("--config", help="JSON model/training config")
        p.add_argument("--preset", choices=("desk", "small", "base"))
        p.add_argument("--hops", type=int)
        p.add_argument("--tie-mode", dest="tie_mode",
                       choices=("reparam", "original", "none"))
        p.add_argument("--max-steps", dest="max_steps", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--peak-lr", dest="peak_lr", type=float)
        p.add_argument("--warmup-steps", dest="warmup_steps", type=int)
        p.add_argument("--eval-interval", dest="eval_interval", type=int)
        p.add_argument("--patience", type=int)
        p.add_argument("--temperature", type=float)
        p.add_argument("--max-len", dest="max_len", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--freeze-stack", dest="freeze_graph_stack",
                       action="store_const", const=True, default=None)

    p = sub.add_parser("train", help="train a translation model")
    p.add_argument("--bitext", action="append", required=True,
                   metavar="SRC:TGT:PATH")
    p.add_argument("--dev-bitext", dest="dev_bitext", action="append",
                   required=True, metavar="SRC:TGT:PATH")
    p.add_argument("--vocab", help="vocabulary file (default: rebuild)")
    p.add_argument("--graph", help="binary graph file (needed when hops > 0)")
    p.add_argument("--out", required=True, help="output directory")
    model_flags(p)
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("analyze",
                       help="similarity / zero-shot / BLEU reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--graph")
    p.add_argument("--dict", action="append", default=[],
                   metavar="LANGA:LANGB:PATH")
    p.add_argument("--test-bitext", dest="test_bitext", action="append",
                   default=[], metavar="SRC:TGT:PATH")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("bench", help="training-step latency benchmark")
    p.add_argument("--bitext", action="append", required=True,
                   metavar="SRC:TGT:PATH")
    p.add_argument("--vocab")
    p.add_argument("--graph", required=True)
    p.add_argument("--hops-list", dest="hops_list", default="0,1,2")
    p.add_argument("--batch-sizes", dest="batch_sizes", default="32")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--out", required=True, help="CSV output path")
    model_flags(p)
    common(p)
    p.set_defaults(fn=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, FileNotFoundError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (RuntimeError, TrainingDiverged, OSError) as exc:
        print("runtime failure: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
