"""Command-line front end.

Subcommands: features, train, predict, evaluate, ablate, compare. Data goes
to --out (or stdout); diagnostics go to stderr; any handled failure exits
with status 2. Every text output artifact starts with a `# config` comment
carrying the effective configuration for provenance, and our CSV readers
skip `#` lines, so artifacts can be fed back into other commands.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import eval as evaluation
from . import features as feat
from . import pipeline
from .audio_io import load_manifest
from .errors import ConfigError, CrydetectError

PROG = "crydetect"


def _load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config file %s is not valid JSON: %s" % (path, exc)) from None
    if not isinstance(obj, dict):
        raise ConfigError("config file %s must hold a flat JSON object" % path)
    return obj


def effective_config(args, extra=None):
    """defaults <- config file <- CLI flags, validated."""
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(_load_config_file(args.config))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    for key, value in (extra or {}).items():
        if value is not None:
            overrides[key] = value
    return pipeline.resolve_config(overrides)


def config_comment(cfg):
    return "# config %s" % json.dumps(cfg, sort_keys=True, separators=(",", ":"))


class _Output:
    """Write to --out or stdout; text mode, newline-normalized."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        if self.path:
            self.fh = open(self.path, "w", encoding="utf-8", newline="")
        else:
            self.fh = sys.stdout
        return self.fh

    def __exit__(self, *exc):
        if self.path:
            self.fh.close()
        return False


def _read_manifest(args, cfg):
    if not getattr(args, "manifest", None):
        raise ConfigError("--manifest is required for this command")
    return load_manifest(args.manifest, allow_split_overlap=cfg["allow_split_overlap"])


def _rebase_paths(manifest, manifest_path):
    base = os.path.dirname(os.path.abspath(manifest_path))
    for e in manifest.entries:
        if not os.path.isabs(e.path):
            e.path = os.path.join(base, e.path)
    return manifest


def _load_embeddings_arg(args):
    if getattr(args, "embeddings", None):
        return feat.load_embeddings(args.embeddings)
    return None


def _fmt(x):
    return repr(float(x))


def cmd_features(args):
    extra = {}
    if args.blocks:
        extra["blocks"] = [b for b in args.blocks.split(",") if b]
    cfg = effective_config(args, extra)
    manifest = _rebase_paths(_read_manifest(args, cfg), args.manifest)
    table = _load_embeddings_arg(args)
    schema = pipeline.build_schema(cfg, table.dim if table is not None and "embedding" in cfg["blocks"] else None)

    extracted = pipeline._extract_all(manifest.entries, cfg, cfg["workers"])
    with _Output(args.out) as out:
        out.write(config_comment(cfg) + "\n")
        out.write(",".join(feat.csv_header(schema)) + "\n")
        for entry, (blocks, _rms) in zip(manifest.entries, extracted):
            if blocks is None:
                print("skipping silent segment %s" % entry.id, file=sys.stderr)
                continue
            emb = None
            if "embedding" in cfg["blocks"]:
                emb = pipeline._lookup_embedding(table, entry.id)
            fv = feat.assemble(blocks, embedding=emb, schema=schema, segment_id=entry.id)
            out.write(entry.id + "," + ",".join(_fmt(v) for v in fv.values) + "\n")
    return 0


def cmd_train(args):
    extra = {"classifier": args.classifier}
    cfg = effective_config(args, extra)
    if not args.out:
        raise ConfigError("train requires --out (path for the model file)")
    manifest = _rebase_paths(_read_manifest(args, cfg), args.manifest)
    table = _load_embeddings_arg(args)
    result = pipeline.train_pipeline(manifest, table, cfg)
    pipeline.save_model(result.model, args.out)
    print(
        "trained %s on %d segments (%d silent excluded), train accuracy %.4f"
        % (cfg["classifier"], len(result.used_ids), len(result.silent_ids), result.train_accuracy),
        file=sys.stderr,
    )
    return 0


def cmd_predict(args):
    cfg = effective_config(args)
    if not args.model:
        raise ConfigError("predict requires --model")
    model = pipeline.load_model(args.model)
    table = _load_embeddings_arg(args)
    if args.audio:
        target = args.audio
    else:
        target = _rebase_paths(_read_manifest(args, cfg), args.manifest)
    preds = pipeline.predict_pipeline(model, target, table, workers=cfg["workers"])
    with _Output(args.out) as out:
        out.write(config_comment(cfg) + "\n")
        out.write("segment_id,score,label,silenced\n")
        for p in preds:
            out.write("%s,%s,%d,%s\n" % (p.segment_id, _fmt(p.score), p.label, str(p.silenced).lower()))
    return 0


def cmd_evaluate(args):
    cfg = effective_config(args)
    if not args.model:
        raise ConfigError("evaluate requires --model")
    model = pipeline.load_model(args.model)
    table = _load_embeddings_arg(args)
    manifest = _rebase_paths(_read_manifest(args, cfg), args.manifest)
    entries = [e for e in manifest.entries if e.split == args.split] if args.split != "all" else manifest.entries
    if not entries:
        raise ConfigError("no manifest entries in split %r" % args.split)
    sub = type(manifest)(entries=entries)
    preds = pipeline.predict_pipeline(model, sub, table, workers=cfg["workers"])
    scores = np.array([p.score for p in preds])
    pred_labels = np.array([p.label for p in preds])
    true_labels = np.array([e.label for e in entries])
    groups = [e.participant for e in entries]

    report = evaluation.classification_report(pred_labels, true_labels)
    have_both = len(np.unique(true_labels)) == 2
    group_rows = None
    auc = None
    if have_both:
        group_map = evaluation.per_group_auc(scores, true_labels, groups)
        auc = group_map[evaluation.OVERALL_KEY][0]
        group_rows = sorted((g, v) for g, v in group_map.items() if g != evaluation.OVERALL_KEY)
        group_rows.append((evaluation.OVERALL_KEY, group_map[evaluation.OVERALL_KEY]))

    lines = [config_comment(cfg)]
    lines.append("n %d" % len(entries))
    lines.append("accuracy %s" % _fmt(report.accuracy))
    lines.append("auc %s" % (_fmt(auc) if auc is not None else "NA"))
    for cls in (0, 1):
        m = report.per_class[cls]
        for name in ("precision", "recall", "f1"):
            lines.append("class%d_%s %s" % (cls, name, _fmt(m[name])))
        lines.append("class%d_support %d" % (cls, m["support"]))
    lines.append("macro_f1 %s" % _fmt(report.macro_f1))
    lines.append("weighted_f1 %s" % _fmt(report.weighted_f1))
    lines.append("silenced %d" % int(sum(p.silenced for p in preds)))

    with _Output(args.out) as out:
        out.write("\n".join(lines) + "\n")
    if group_rows is not None:
        group_path = args.out + ".groups.csv" if args.out else None
        with _Output(group_path) as out:
            out.write(config_comment(cfg) + "\n")
            out.write("group,auc,n\n")
            for g, (g_auc, n) in group_rows:
                out.write("%s,%s,%d\n" % (g, _fmt(g_auc) if g_auc is not None else "NA", n))
        if group_path:
            print("per-group AUC written to %s" % group_path, file=sys.stderr)
    return 0


def cmd_ablate(args):
    cfg = effective_config(args)
    manifest = _rebase_paths(_read_manifest(args, cfg), args.manifest)
    table = _load_embeddings_arg(args)
    subsets = [[b for b in chunk.split(",") if b] for chunk in args.subsets.split(";") if chunk]
    rows = pipeline.ablate(manifest, table, cfg, subsets)
    with _Output(args.out) as out:
        out.write(config_comment(cfg) + "\n")
        out.write("subset,accuracy,f1\n")
        for name, accuracy, f1 in rows:
            out.write("%s,%s,%s\n" % (name, _fmt(accuracy), _fmt(f1)))
    return 0


def _read_group_auc_csv(path):
    """Read a `group,auc,n` CSV (as written by evaluate). NA aucs and the
    reserved pooled row are dropped from pairing."""
    out = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None or [h.strip() for h in header[:2]] != ["group", "auc"]:
            raise ConfigError("%s: expected header group,auc,n" % path)
        for row in rows:
            if not row:
                continue
            group, auc = row[0], row[1]
            if group == evaluation.OVERALL_KEY:
                continue
            if auc == "NA":
                print("%s: group %s has undefined AUC, dropped from pairing" % (path, group), file=sys.stderr)
                continue
            out[group] = float(auc)
    if len(out) < 2:
        raise ConfigError("%s: need at least 2 defined groups for comparison" % path)
    return out


def cmd_compare(args):
    extra = {}
    if args.rope is not None:
        extra["rope"] = args.rope
    if args.n_mc is not None:
        extra["n_mc"] = args.n_mc
    cfg = effective_config(args, extra)
    if len(args.csvs) < 2:
        raise ConfigError("compare needs at least two per-group AUC CSVs")
    names = [os.path.splitext(os.path.basename(p))[0] for p in args.csvs]
    if args.labels:
        names = [s for s in args.labels.split(",") if s]
        if len(names) != len(args.csvs):
            raise ConfigError("--labels must name each input CSV exactly once")
    tables = [_read_group_auc_csv(p) for p in args.csvs]
    keys = set(tables[0])
    for path, table in zip(args.csvs[1:], tables[1:]):
        if set(table) != keys:
            diff = sorted(keys.symmetric_difference(table))
            raise ConfigError("group keys differ across inputs (symmetric difference: %s)" % ", ".join(diff))
    ordered = sorted(keys)
    with _Output(args.out) as out:
        out.write(config_comment(cfg) + "\n")
        out.write("a,b,p_left,p_rope,p_right\n")
        for i in range(len(tables)):
            for j in range(len(tables)):
                if i == j:
                    continue
                z = np.array([tables[i][g] - tables[j][g] for g in ordered])
                post = evaluation.bayes_signed_rank(z, rope=cfg["rope"], n_mc=cfg["n_mc"], seed=cfg["seed"])
                out.write(
                    "%s,%s,%s,%s,%s\n"
                    % (names[i], names[j], _fmt(post.p_left), _fmt(post.p_rope), _fmt(post.p_right))
                )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Infant cry detection: features, boosted-tree training, prediction and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, manifest=True, model=False, embeddings=True):
        if manifest:
            p.add_argument("--manifest", help="dataset manifest CSV (id,path,label,participant,split)")
        if model:
            p.add_argument("--model", help="trained model file")
        if embeddings:
            p.add_argument("--embeddings", help="embedding sidecar file (W2VE)")
        p.add_argument("--config", help="flat JSON config file; flags override it")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--workers", type=int, help="worker threads for feature extraction")

    p = sub.add_parser("features", help="extract the unscaled feature matrix to CSV")
    add_common(p)
    p.add_argument("--blocks", help="comma-separated feature blocks (default: mfcc,chroma,contrast)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a pipeline and save the model container")
    add_common(p)
    p.add_argument("--classifier", choices=["gbm", "svm_linear", "svm_rbf"], help="overrides config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a manifest or one WAV file")
    add_common(p, model=True)
    p.add_argument("audio", nargs="?", help="single WAV file (alternative to --manifest)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="AUC, per-group AUC and classification report")
    add_common(p, model=True)
    p.add_argument("--split", default="test", choices=["train", "test", "all"], help="manifest split to score")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train/evaluate one pipeline per feature subset")
    add_common(p)
    p.add_argument(
        "--subsets",
        default="mfcc;chroma;contrast;mfcc,chroma,contrast",
        help="semicolon-separated subsets, comma-separated blocks within each",
    )
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("compare", help="Bayesian signed-rank comparison of per-group AUC CSVs")
    add_common(p, manifest=False, embeddings=False)
    p.add_argument("csvs", nargs="+", help="two or more group,auc,n CSVs (from evaluate)")
    p.add_argument("--rope", type=float, help="region of practical equivalence half-width (default 0)")
    p.add_argument("--n-mc", type=int, dest="n_mc", help="Monte Carlo iterations (default 50000)")
    p.add_argument("--labels", help="comma-separated display names for the inputs")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CrydetectError as exc:
        print("%s: error: %s" % (PROG, exc), file=sys.stderr)
        return 2
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print("%s: error: %s" % (PROG, exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
