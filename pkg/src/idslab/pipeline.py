"""The four pipeline stages, each reading and writing files under one output directory.

Every file a stage writes is recorded in ``manifest.json`` with its sha256.
A stage writes into temporary files and only moves them into place once it
has succeeded, so a failure leaves no partial outputs behind.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path

from . import learners
from .attacks import compose_run, format_register_dump
from .config import ExperimentConfig
from .errors import ManifestError, ParseError
from .flows import FEATURE_NAMES, Dataset, build_dataset
from .metrics import MetricsReport, permutation_importance
from .packets import TrafficKind, read_packet_log, write_packet_log

MANIFEST = "manifest.json"
CONFIG_FILE = "config.ini"
PACKETS = "packets.csv"
RUN_MANIFEST = "run_manifest.json"
REGISTER_DUMP = "register_dump.txt"
DATASET = "dataset.csv"
METRICS_CSV = "metrics.csv"
ROC_CSV = "roc.csv"
IMPORTANCE_JSON = "importance.json"
IMPORTANCE_CSV = "importance.csv"

METRIC_COLUMNS = ("algorithm", "accuracy", "far", "ur", "mcc", "sensitivity", "auc",
                  "tn", "fp", "fn", "tp")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Stage:
    """Collects a stage's outputs and commits them together with the manifest."""

    def __init__(self, out):
        self.out = Path(out)
        self.pending = {}  # relative name -> temporary path

    def path(self, name):
        final = self.out / name
        final.parent.mkdir(parents=True, exist_ok=True)
        tmp = final.with_name(f".{final.name}.tmp")
        self.pending[name] = tmp
        return tmp

    def write_text(self, name, text):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)

    def __enter__(self):
        self.out.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for tmp in self.pending.values():
                tmp.unlink(missing_ok=True)
            return False
        manifest = load_manifest(self.out)
        for name, tmp in sorted(self.pending.items()):
            os.replace(tmp, self.out / name)
            manifest["files"][name] = sha256_file(self.out / name)
        text = _json(manifest)
        tmp = self.out / f".{MANIFEST}.tmp"
        tmp.write_text(text)
        os.replace(tmp, self.out / MANIFEST)
        return False


def load_manifest(out):
    path = Path(out) / MANIFEST
    if not path.exists():
        return {"format": "idslab-manifest", "files": {}}
    with open(path) as fh:
        return json.load(fh)


def verify_manifest(out):
    """Recompute every recorded hash; returns the list of (name, problem) mismatches."""
    manifest = load_manifest(out)
    problems = []
    for name, digest in sorted(manifest["files"].items()):
        path = Path(out) / name
        if not path.exists():
            problems.append((name, "missing"))
        elif sha256_file(path) != digest:
            problems.append((name, "hash mismatch"))
    return problems


# -- simulate ---------------------------------------------------------------------

def simulate(config: ExperimentConfig, log=print):
    run = compose_run(config.horizon, config.resolved_scenarios(), config.target,
                      seed=config.seed_for("simulate"), plant_config=config.plant,
                      net=config.network)
    with Stage(config.out) as stage:
        stage.write_text(CONFIG_FILE, config.to_ini(include_out=False))
        with open(stage.path(PACKETS), "w", newline="") as fh:
            write_packet_log(run.packets, fh)
        manifest = run.manifest()
        manifest["master_seed"] = config.seed
        stage.write_text(RUN_MANIFEST, _json(manifest))
        stage.write_text(REGISTER_DUMP, format_register_dump(run.register_dumps))
    log(f"simulated {len(run.packets)} packets over {config.horizon:g} s "
        f"(mean size {run.mean_packet_size:.2f} B)")
    log(composition_table(run.composition, config.target))
    return run


def composition_table(realized, target):
    lines = [f"{'class':<20}{'realized %':>12}{'target %':>12}"]
    for kind in TrafficKind:
        want = "-" if target is None or kind.value not in target else f"{target[kind.value]:.4f}"
        lines.append(f"{kind.value:<20}{realized.get(kind.value, 0.0):>12.4f}{want:>12}")
    attack = sum(v for k, v in realized.items() if k != TrafficKind.NORMAL.value)
    lines.append(f"{'attack total':<20}{attack:>12.4f}")
    return "\n".join(lines)


# -- extract ----------------------------------------------------------------------

def extract(config: ExperimentConfig, packets_path=None, log=print):
    packets_path = Path(packets_path) if packets_path else Path(config.out) / PACKETS
    try:
        packets = read_packet_log(packets_path)
    except ParseError as exc:
        exc.path = str(packets_path)
        raise
    dataset = build_dataset(packets, config.idle_timeout, config.min_duration)
    with Stage(config.out) as stage:
        with open(stage.path(DATASET), "w", newline="") as fh:
            dataset.to_csv(fh)
    shares = dataset.class_shares()
    log(f"extracted {len(dataset)} flow rows: normal {shares['normal']:.4f}%, "
        f"attack {shares['attack']:.4f}%")
    return dataset


# -- train-eval -------------------------------------------------------------------

def train_eval(config: ExperimentConfig, dataset_path=None, log=print):
    dataset_path = Path(dataset_path) if dataset_path else Path(config.out) / DATASET
    try:
        dataset = Dataset.from_csv(dataset_path)
    except ParseError as exc:
        exc.path = str(dataset_path)
        raise
    spec = learners.SplitSpec(config.train_fraction, config.seed_for("split"), config.stratified)
    train_set, test_set = learners.split_dataset(dataset, spec)
    reports, models = {}, {}
    for name in config.algorithms:
        seed = config.seed_for("train", name)
        model = learners.train(train_set.X, train_set.y, name,
                               config.hyperparameters.get(name), seed)
        models[name] = model
        reports[name] = MetricsReport.evaluate(name, seed, model.scores(test_set.X), test_set.y)
        r = reports[name]
        log(f"{name:<20} MCC {r.mcc:8.3f}%  UR {r.ur:7.3f}%  FAR {r.far:7.4f}%  AUC {r.auc:.4f}")
    best = max(config.algorithms, key=lambda n: (reports[n].mcc, -config.algorithms.index(n)))
    ranking = permutation_importance(models[best], test_set.X, test_set.y,
                                     repeats=config.importance_repeats,
                                     seed=config.seed_for("importance"),
                                     feature_names=FEATURE_NAMES)
    reports[best].importance = ranking
    with Stage(config.out) as stage:
        for name in config.algorithms:
            stage.write_text(f"models/{name}.json", learners.model_to_json(models[name]) + "\n")
            stage.write_text(f"reports/{name}.json", _json(reports[name].to_dict()))
        stage.write_text(METRICS_CSV, metrics_csv(reports.values()))
        stage.write_text(ROC_CSV, roc_csv(reports.values()))
        doc = {"algorithm": best, "split_seed": spec.seed, "train_rows": len(train_set),
               "test_rows": len(test_set), **ranking.to_dict()}
        stage.write_text(IMPORTANCE_JSON, _json(doc))
        stage.write_text(IMPORTANCE_CSV, importance_csv(ranking))
    top = ", ".join(f"{f} ({c:.3f})" for f, c, _ in ranking.top(5))
    log(f"best MCC: {best}; top features ({ranking.mode}): {top}")
    return reports, best


def _csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def metrics_csv(reports):
    rows = []
    for r in reports:
        c = r.confusion
        rows.append([r.algorithm, repr(r.accuracy), repr(r.far), repr(r.ur), repr(r.mcc),
                     repr(r.sensitivity), repr(r.auc), c.tn, c.fp, c.fn, c.tp])
    return _csv_text(METRIC_COLUMNS, rows)


def roc_csv(reports):
    rows = [[r.algorithm, repr(fpr), repr(tpr)] for r in reports for fpr, tpr in r.roc]
    return _csv_text(("algorithm", "fpr", "tpr"), rows)


def importance_csv(ranking):
    rows = [[rank, f, repr(c), repr(raw)] for rank, (f, c, raw) in enumerate(ranking.ranked(), 1)]
    return _csv_text(("rank", "feature", "normalized", "raw"), rows)


# -- report -----------------------------------------------------------------------

def report(config: ExperimentConfig, log=print):
    out = Path(config.out)
    problems = verify_manifest(out)
    if problems:
        detail = ", ".join(f"{n}: {p}" for n, p in problems)
        raise ManifestError(f"manifest verification failed ({detail})")
    files = load_manifest(out)["files"]
    log(f"manifest OK: {len(files)} files verified")
    lines = []
    if RUN_MANIFEST in files:
        with open(out / RUN_MANIFEST) as fh:
            run = json.load(fh)
        target = run["config"].get("target_composition")
        lines.append(f"packets: {run['packets']}, mean size {run['mean_packet_size']:.2f} B")
        lines.append(composition_table(run["composition"], target))
    if METRICS_CSV in files:
        with open(out / METRICS_CSV, newline="") as fh:
            rows = list(csv.DictReader(fh))
        lines.append(f"{'algorithm':<20}{'accuracy':>10}{'FAR':>9}{'UR':>9}{'MCC':>9}"
                     f"{'sens.':>9}{'AUC':>8}")
        for row in rows:
            lines.append(f"{row['algorithm']:<20}{float(row['accuracy']):>10.4f}"
                         f"{float(row['far']):>9.4f}{float(row['ur']):>9.3f}"
                         f"{float(row['mcc']):>9.3f}{float(row['sensitivity']):>9.3f}"
                         f"{float(row['auc']):>8.4f}")
    if IMPORTANCE_JSON in files:
        with open(out / IMPORTANCE_JSON) as fh:
            imp = json.load(fh)
        lines.append(f"importance ({imp['algorithm']}, {imp['mode']}): " + ", ".join(imp["top5"]))
    for line in lines:
        log(line)
    return files
