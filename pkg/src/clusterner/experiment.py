"""Declarative experiment runs: baseline plus one tagger per clustering.

A run file is flat ``key = value`` text; list-valued keys are repeated::

    name = tgt
    train = data/train.conll
    test = data/test.conll
    columns = word-ne
    clusters = tgt=clusters/tgt.tsv
    clusters = sec=clusters/sec.tsv
    merge = multi=tgt+sec
    self = tgt
    feature.cluster_window = 1
    train.l2_sigma = 1.0
    output = out

Relative paths resolve against the run file's directory.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .clustering import Clustering, load_clusters, save_clusters
from .corpus import ColumnSpec, LabeledCorpus, normalize_tag_scheme, read_conll, write_conll
from .crf import FeatureConfig, TrainConfig, save_model, tag_corpus, train_crf
from .errors import ClusternerError, DataError
from .evaluation import (EvalReport, McNemarResult, delta_report, mcnemar, oov_report, score,
                         write_oov, write_report)
from .merge import merge_clusterings

logger = logging.getLogger(__name__)

BASELINE = "baseline"
STAR_NOTE = "** -> (p<0.01) and * -> (p<0.05)"


class StageError(ClusternerError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


@dataclass
class ExperimentSpec:
    train: str
    test: str
    output: str
    name: str = "target"
    columns: ColumnSpec = field(default_factory=lambda: ColumnSpec.parse("conll2003"))
    test_columns: Optional[ColumnSpec] = None
    scheme: str = "BIO2"
    test_scheme: Optional[str] = None
    clusters: List[Tuple[str, str]] = field(default_factory=list)
    merges: List[Tuple[str, str, List[str]]] = field(default_factory=list)
    self_id: Optional[str] = None
    features: Dict[str, str] = field(default_factory=dict)
    training: Dict[str, str] = field(default_factory=dict)
    mcnemar_unit: str = "token"
    oov_clusters: List[str] = field(default_factory=list)
    oov_top: int = 20
    jobs: int = 1

    def validate(self):
        ids = [c for c, _ in self.clusters] + [m for m, _, _ in self.merges]
        if len(set(ids)) != len(ids):
            raise DataError(f"clustering ids must be unique: {ids}")
        if BASELINE in ids:
            raise DataError(f"{BASELINE!r} is reserved")
        known = set()
        for cid, _ in self.clusters:
            known.add(cid)
        for mid, target, sources in self.merges:
            for ref in [target, *sources]:
                if ref not in known:
                    raise DataError(f"merge {mid}: unknown clustering {ref!r}")
            known.add(mid)
        if self.self_id is not None and self.self_id not in known:
            raise DataError(f"self clustering {self.self_id!r} is not declared")
        for cid in self.oov_clusters:
            if cid not in known:
                raise DataError(f"oov clustering {cid!r} is not declared")
        if os.path.abspath(self.train) == os.path.abspath(self.test):
            raise DataError("train and test must be different files")
        if self.mcnemar_unit not in ("token", "entity"):
            raise DataError(f"unknown McNemar unit {self.mcnemar_unit!r}")
        FeatureConfig.from_items(self.features)
        TrainConfig.from_items(self.training)


def parse_run_file(text: str, base_dir: str = ".") -> ExperimentSpec:
    def path(p):
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))

    single, lists = {}, {"clusters": [], "merge": [], "oov_clusters": []}
    features, training = {}, {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"run file line {n}: expected key = value")
        key, value = key.strip(), value.strip()
        if key.startswith("feature."):
            features[key[8:]] = value
        elif key.startswith("train."):
            training[key[6:]] = value
        elif key in lists:
            lists[key].extend(v.strip() for v in value.split(",") if v.strip())
        elif key in single:
            raise DataError(f"run file line {n}: {key} given twice")
        else:
            single[key] = value
    for req in ("train", "test", "output"):
        if req not in single:
            raise DataError(f"run file is missing {req!r}")

    clusters = []
    for item in lists["clusters"]:
        cid, sep, p = item.partition("=")
        if not sep:
            raise DataError(f"clusters entry {item!r} must be id=path")
        clusters.append((cid.strip(), path(p.strip())))
    merges = []
    for item in lists["merge"]:
        mid, sep, rhs = item.partition("=")
        parts = [p.strip() for p in rhs.split("+") if p.strip()]
        if not sep or not parts:
            raise DataError(f"merge entry {item!r} must be id=target+source+...")
        merges.append((mid.strip(), parts[0], parts[1:]))

    known = {"train", "test", "output", "name", "columns", "test_columns", "scheme",
             "test_scheme", "self", "mcnemar", "oov_top", "jobs"}
    unknown = set(single) - known
    if unknown:
        raise DataError(f"unknown run file keys: {sorted(unknown)}")
    spec = ExperimentSpec(
        train=path(single["train"]), test=path(single["test"]), output=path(single["output"]),
        name=single.get("name", "target"),
        columns=ColumnSpec.parse(single.get("columns", "conll2003")),
        test_columns=ColumnSpec.parse(single["test_columns"]) if "test_columns" in single else None,
        scheme=single.get("scheme", "BIO2"), test_scheme=single.get("test_scheme"),
        clusters=clusters, merges=merges, self_id=single.get("self"),
        features=features, training=training, mcnemar_unit=single.get("mcnemar", "token"),
        oov_clusters=lists["oov_clusters"], oov_top=int(single.get("oov_top", 20)),
        jobs=int(single.get("jobs", 1)))
    spec.validate()
    return spec


def load_run_file(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as f:
        return parse_run_file(f.read(), os.path.dirname(os.path.abspath(path)))


@dataclass
class RunResult:
    run_id: str
    predictions: List[List[str]]
    report: EvalReport
    versus_baseline: Optional[McNemarResult] = None


@dataclass
class ExperimentResult:
    directory: str
    runs: Dict[str, RunResult]
    singles: List[str]
    merged: List[str]
    best_secondary: Optional[str]
    deltas: Dict[str, float]


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (ClusternerError, OSError, ValueError) as e:
        raise StageError(name, e) from e


def _load_corpus(path, columns, scheme):
    with open(path, encoding="utf-8") as f:
        return normalize_tag_scheme(read_conll(f, columns), scheme)


def _run_one(args):
    run_id, train, test, clusterings, fconf, tconf, outdir = args
    sources = () if run_id == BASELINE else (run_id,)
    feature_config = FeatureConfig.from_items(fconf, cluster_sources=sources)
    train_config = TrainConfig.from_items(tconf)
    used = {run_id: clusterings[run_id]} if sources else {}
    model = train_crf(train, feature_config, train_config, used)
    save_model(model, os.path.join(outdir, "models", f"{run_id}.model"))
    return tag_corpus(model, test)


def _fmt(x):
    return f"{100 * x:.2f}"


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Train and evaluate every grid cell; write models, predictions and tables.

    Output files depend only on the spec inputs, never on ``jobs``.
    """
    _stage("spec", spec.validate)
    out = spec.output
    for sub in ("models", "predictions", "reports", "clusters"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)

    train = _stage("read-train", _load_corpus, spec.train, spec.columns, spec.scheme)
    test = _stage("read-test", _load_corpus, spec.test, spec.test_columns or spec.columns,
                  spec.test_scheme or spec.scheme)
    clusterings: Dict[str, Clustering] = {}
    for cid, p in spec.clusters:
        clusterings[cid] = _stage(f"load-clusters:{cid}", load_clusters, p, cid)
    for mid, target, sources in spec.merges:
        merged, report = _stage(f"merge:{mid}", merge_clusterings, clusterings[target],
                                [clusterings[s] for s in sources])
        merged.language = mid
        clusterings[mid] = merged
        save_clusters(merged, os.path.join(out, "clusters", f"{mid}.tsv"))
        with open(os.path.join(out, "clusters", f"{mid}.report.tsv"), "w",
                  encoding="utf-8", newline="\n") as f:
            report.write(f)

    singles = [cid for cid, _ in spec.clusters]
    merged_ids = [mid for mid, _, _ in spec.merges]
    run_ids = [BASELINE] + singles + merged_ids
    jobs = [(r, train, test, clusterings, spec.features, spec.training, out) for r in run_ids]
    try:
        if spec.jobs > 1:
            with ProcessPoolExecutor(spec.jobs) as pool:
                preds = list(pool.map(_run_one, jobs))
        else:
            preds = [_run_one(j) for j in jobs]
    except (ClusternerError, ValueError) as e:
        raise StageError("train", e) from e

    runs: Dict[str, RunResult] = {}
    for run_id, pred in zip(run_ids, preds):
        with open(os.path.join(out, "predictions", f"{run_id}.conll"), "w",
                  encoding="utf-8", newline="\n") as f:
            write_conll(test, f, pred)
        runs[run_id] = RunResult(run_id, pred, score(test, pred))
    base = runs[BASELINE]
    for run_id in run_ids:
        r = runs[run_id]
        if run_id != BASELINE:
            r.versus_baseline = mcnemar(test, r.predictions, base.predictions,
                                        spec.mcnemar_unit)
        with open(os.path.join(out, "reports", f"{run_id}.tsv"), "w", encoding="utf-8",
                  newline="\n") as f:
            write_report(r.report, f, None if run_id == BASELINE else base.report,
                         r.versus_baseline)

    _write_grid(os.path.join(out, "grid.tsv"), spec, runs, singles, merged_ids)

    secondary = [c for c in singles if c != spec.self_id]
    best = max(secondary, key=lambda c: (runs[c].report.f1, -secondary.index(c)),
               default=None)
    deltas = delta_report(base.report, runs[best].report) if best else {}
    with open(os.path.join(out, "delta.tsv"), "w", encoding="utf-8", newline="\n") as f:
        f.write(f"NEs\t{spec.name} ({best or 'none'})\n")
        for typ, d in deltas.items():
            f.write(f"{typ}\t{d:.1f}\n")

    oov_ids = spec.oov_clusters or secondary
    entries = oov_report(train, test, {c: clusterings[c].assign for c in oov_ids})
    with open(os.path.join(out, "oov.tsv"), "w", encoding="utf-8", newline="\n") as f:
        write_oov(entries[:spec.oov_top], f)
    return ExperimentResult(out, runs, singles, merged_ids, best, deltas)


def _write_grid(path, spec, runs, singles, merged_ids):
    unit = spec.mcnemar_unit
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"Word Clusters\t{spec.name} NER\tp (McNemar, {unit})\tb\tc\n")
        f.write(f"Baseline (None)\t{_fmt(runs[BASELINE].report.f1)}\t\t\t\n")

        def row(label, r):
            m = r.versus_baseline
            f.write(f"{label}\t{_fmt(r.report.f1)}{m.stars}\t{m.p_value:.3g}\t{m.b}\t{m.c}\n")

        for cid in singles:
            row(cid, runs[cid])
        if singles:
            avg = sum(runs[c].report.f1 for c in singles) / len(singles)
            f.write(f"Average\t{_fmt(avg)}\t\t\t\n")
        for mid in merged_ids:
            row(mid, runs[mid])
        f.write(f"# significance vs baseline: {STAR_NOTE}\n")
