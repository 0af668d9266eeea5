"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List

from . import __version__
from .clustering import (DEFAULT_K, DEFAULT_MAX_PASSES, DEFAULT_MIN_COUNT, load_clusters,
                         save_clusters, train_clusters)
from .corpus import (DOCSTART, ColumnSpec, build_vocabulary, normalize_tag_scheme, read_conll,
                     tokenize_plain, write_conll)
from .crf import FeatureConfig, TrainConfig, load_model, save_model, tag_corpus, train_crf
from .errors import ClusternerError, DataError, NumericalError
from .evaluation import mcnemar, oov_report, score, write_oov, write_report
from .experiment import StageError, load_run_file, run_experiment
from .merge import merge_clusterings

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pairs(items: List[str], what: str) -> Dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise DataError(f"{what} {item!r} must look like id=value")
        out[key.strip()] = value.strip()
    return out


def _read_corpus(path, columns, scheme):
    with open(path, encoding="utf-8") as f:
        return normalize_tag_scheme(read_conll(f, ColumnSpec.parse(columns)), scheme)


def read_predictions(path) -> List[List[str]]:
    """Last column of a CoNLL file, one list per sentence."""
    out, cur = [], []
    with open(path, encoding="utf-8") as f:
        for line in f:
            cols = line.split()
            if not cols:
                if cur:
                    out.append(cur)
                cur = []
            elif cols[0] == DOCSTART:
                continue
            else:
                cur.append(cols[-1])
    if cur:
        out.append(cur)
    return out


def cmd_cluster(args):
    with open(args.input, "rb") as f:
        sentences = list(tokenize_plain(f))
    language = args.language or os.path.splitext(os.path.basename(args.input))[0]
    if args.vocab_dump:
        with open(args.vocab_dump, "w", encoding="utf-8", newline="\n") as f:
            build_vocabulary(sentences, args.min_count).dump(f)
    clustering = train_clusters(sentences, K=args.k, max_passes=args.max_passes, seed=args.seed,
                                min_count=args.min_count, language=language,
                                suffix_length=args.suffix_length)
    save_clusters(clustering, args.output)


def cmd_merge(args):
    target = load_clusters(args.target)
    sources = [load_clusters(p) for p in args.source]
    for src, p in zip(sources, args.source):
        if not src.language:
            src.language = os.path.splitext(os.path.basename(p))[0]
    merged, report = merge_clusterings(target, sources)
    save_clusters(merged, args.output)
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as f:
            report.write(f)


def _read_config(path, sets):
    items = {}
    if path:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.split("#", 1)[0].strip()
                if line:
                    key, _, value = line.partition("=")
                    items[key.strip()] = value.strip()
    items.update(_pairs(sets, "--set"))
    features, training = {}, {}
    train_keys = set(TrainConfig.__dataclass_fields__)
    for k, v in items.items():
        if k.startswith("feature."):
            features[k[8:]] = v
        elif k.startswith("train."):
            training[k[6:]] = v
        elif k in train_keys:
            training[k] = v
        else:
            features[k] = v
    return features, training


def cmd_train(args):
    corpus = _read_corpus(args.train, args.columns, args.scheme)
    paths = _pairs(args.clusters, "--clusters")
    clusterings = {cid: load_clusters(p, cid) for cid, p in paths.items()}
    features, training = _read_config(args.config, args.set)
    features.setdefault("cluster_sources", ",".join(paths))
    model = train_crf(corpus, FeatureConfig.from_items(features),
                      TrainConfig.from_items(training), clusterings)
    save_model(model, args.model)


def cmd_tag(args):
    model = load_model(args.model)
    corpus = _read_corpus(args.input, args.columns, args.scheme)
    with open(args.output, "w", encoding="utf-8", newline="\n") as f:
        write_conll(corpus, f, tag_corpus(model, corpus))


def cmd_eval(args):
    gold = _read_corpus(args.gold, args.columns, args.scheme)
    pred = read_predictions(args.pred)
    report = score(gold, pred)
    baseline = result = None
    if args.pred_b:
        pred_b = read_predictions(args.pred_b)
        baseline = score(gold, pred_b)
        result = mcnemar(gold, pred, pred_b, args.mcnemar)
    out = open(args.report, "w", encoding="utf-8", newline="\n") if args.report else sys.stdout
    try:
        write_report(report, out, baseline, result)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_oov(args):
    train = _read_corpus(args.train, args.columns, args.scheme)
    test = _read_corpus(args.test, args.columns, args.scheme)
    clusterings = {cid: load_clusters(p, cid).assign
                   for cid, p in _pairs(args.clusters, "--clusters").items()}
    entries = oov_report(train, test, clusterings)[:args.top]
    out = open(args.output, "w", encoding="utf-8", newline="\n") if args.output else sys.stdout
    try:
        write_oov(entries, out)
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_experiment(args):
    spec = load_run_file(args.runfile)
    if args.jobs is not None:
        spec.jobs = args.jobs
    if args.output:
        spec.output = args.output
    result = run_experiment(spec)
    with open(os.path.join(result.directory, "grid.tsv"), encoding="utf-8") as f:
        sys.stdout.write(f.read())


def build_parser():
    p = _Parser(prog="clusterner",
                description="Word clusters as features for CRF named entity taggers.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_opts(s):
        s.add_argument("--columns", default="conll2003",
                       help="preset (conll2003, conll2002-es, conll2002-nl, word-ne) "
                            "or word=0,pos=1,ne=3,sep=tab")
        s.add_argument("--scheme", default="BIO2", choices=["BIO2", "IOB1"])

    s = sub.add_parser("cluster", help="induce word clusters from a plain-text corpus")
    s.add_argument("--input", required=True)
    s.add_argument("--k", type=int, default=DEFAULT_K)
    s.add_argument("--min-count", type=int, default=DEFAULT_MIN_COUNT)
    s.add_argument("--max-passes", type=int, default=DEFAULT_MAX_PASSES)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--language", default="")
    s.add_argument("--suffix-length", type=int, default=0,
                   help="add word-ending pseudo contexts of this length (0 = off)")
    s.add_argument("--vocab-dump")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("merge", help="import secondary-language words into a clustering")
    s.add_argument("--target", required=True)
    s.add_argument("--source", action="append", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--report")
    s.set_defaults(func=cmd_merge)

    s = sub.add_parser("train", help="train a CRF tagger")
    s.add_argument("--train", required=True)
    s.add_argument("--clusters", action="append", default=[], metavar="ID=FILE")
    s.add_argument("--config", help="key=value file (feature.* and train.* keys)")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--model", required=True)
    data_opts(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("tag", help="append predicted labels as a final column")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    data_opts(s)
    s.set_defaults(func=cmd_tag)

    s = sub.add_parser("eval", help="phrase-level P/R/F1, optional McNemar test")
    s.add_argument("--gold", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--pred-b", help="second system; reported as the baseline for dF1")
    s.add_argument("--mcnemar", choices=["token", "entity"], default="token")
    s.add_argument("--report")
    data_opts(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("oov-report", help="test OOV words covered by clusterings")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--clusters", action="append", default=[], metavar="ID=FILE")
    s.add_argument("--top", type=int, default=20)
    s.add_argument("--output")
    data_opts(s)
    s.set_defaults(func=cmd_oov)

    s = sub.add_parser("experiment", help="run a declarative experiment grid")
    s.add_argument("runfile")
    s.add_argument("--jobs", type=int)
    s.add_argument("--output")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as e:
        print(f"clusterner: {e}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(e.cause, NumericalError) else EXIT_DATA
    except NumericalError as e:
        print(f"clusterner: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ClusternerError, OSError, ValueError, KeyError) as e:
        print(f"clusterner: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
