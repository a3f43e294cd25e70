"""Operator CLI: synthesize corpora, split, train, tune, evaluate, detect,
and manage the expert review queue.

Commands are deterministic given their explicit --seed; synth/split/train
refuse to run without one. Diagnostics go to stderr, data to files or
stdout. Each error family exits with its own code (see EXIT_CODES).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import audio, dataset, detection, features, persistence, svm
from .errors import (
    AudioError,
    DatasetError,
    DetectionError,
    FeatureError,
    IoError,
    MissingStratum,
    PersistenceError,
    SvmError,
    TajweedError,
)

EXIT_CODES = (
    (AudioError, 3),
    (FeatureError, 4),
    (SvmError, 5),
    (DetectionError, 6),
    (DatasetError, 7),
    (PersistenceError, 8),
    (IoError, 9),
)

CAL_HOLDOUT_FRACTION = 0.2


def _load_exemplar(path, config):
    clip = audio.load_wav(path)
    if clip.sample_rate_hz != config.sample_rate_hz:
        clip = audio.resample(clip, config.sample_rate_hz)
    return audio.normalize_duration(clip, detection.WINDOW_S, seed=0)


def _entry_rows(entries):
    return "\n".join(
        f"{e.path},{e.rule_id},{e.polarity or ''},{e.onset_s if e.onset_s is not None else ''}"
        for e in entries
    )


def train_rule_model(entries, audio_root, rule_id, C, gamma, seed,
                     config: features.FeatureConfig | None = None):
    """Full training pipeline for one rule: features -> scaler -> SMO ->
    Platt calibration on a stratified 20% holdout -> thresholds from the
    train-split rule-free windows. Returns (RuleModel, summary dict).
    """
    config = config or features.FeatureConfig()
    train_entries = [e for e in entries
                     if e.rule_id == rule_id and e.split == "train"
                     and e.polarity in dataset.POLARITIES and e.onset_s is None]
    if not train_entries:
        raise MissingStratum(f"manifest has no train-split exemplars for {rule_id}")
    for polarity in dataset.POLARITIES:
        if not any(e.polarity == polarity for e in train_entries):
            raise MissingStratum(f"no train-split {polarity} exemplars for {rule_id}")

    bank = features.build_filterbank(config)
    clips, labels = [], []
    for e in train_entries:
        clip = _load_exemplar(dataset.resolve_path(audio_root, e.path), config)
        clips.append(clip)
        labels.append(1.0 if e.polarity == "Right" else -1.0)
    X = np.vstack([features.extract_features(c, config, bank).values for c in clips])
    y = np.array(labels)

    # stratified calibration holdout, never used to fit the SVM
    rng = np.random.default_rng(seed)
    hold = np.zeros(len(y), dtype=bool)
    for cls in (-1.0, 1.0):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        n_hold = max(1, round(CAL_HOLDOUT_FRACTION * len(idx)))
        hold[idx[:n_hold]] = True

    scaler = features.fit_scaler(X[~hold])
    problem = svm.TrainingProblem(scaler.apply(X[~hold]), y[~hold])
    model = svm.train(problem, C, svm.KernelParams(gamma=gamma), scaler=scaler)
    holdout_f = svm.decision_values(model, X[hold])
    holdout_acc = float(np.mean(np.sign(holdout_f) == y[hold]))
    calibration = svm.fit_calibration(model, X[hold], y[hold])

    neg_entries = [e for e in entries
                   if e.rule_id == rule_id and e.split == "train" and e.polarity is None]
    negatives = []
    for e in neg_entries:
        clip = audio.load_wav(dataset.resolve_path(audio_root, e.path))
        if clip.sample_rate_hz != config.sample_rate_hz:
            clip = audio.resample(clip, config.sample_rate_hz)
        negatives.extend(w for _, w in audio.slide_windows(clip))
    positives = [clips[i] for i in np.flatnonzero(hold & (y > 0))]

    dataset_hash = hashlib.sha256(
        (_entry_rows(train_entries + neg_entries) + config.fingerprint()).encode()
    ).hexdigest()
    rule_model = detection.RuleModel(
        rule_id=rule_id,
        svm=model,
        calibration=calibration,
        tau_right=0.5,
        tau_wrong=0.5,
        feature_config=config,
        config_fingerprint=config.fingerprint(),
        dataset_hash=dataset_hash,
        train_seed=seed,
    )
    thresholds = detection.calibrate_thresholds(rule_model, positives, negatives)
    rule_model = replace(rule_model, tau_right=thresholds.tau_right,
                         tau_wrong=thresholds.tau_wrong)
    summary = {
        "rule_id": rule_id,
        "n_train": int((~hold).sum()),
        "n_holdout": int(hold.sum()),
        "n_support": int(model.support_vectors.shape[0]),
        "holdout_accuracy": holdout_acc,
        "tau_right": thresholds.tau_right,
        "tau_wrong": thresholds.tau_wrong,
        "saturated": thresholds.right_saturated or thresholds.wrong_saturated,
    }
    return rule_model, summary


def _feature_config(args) -> features.FeatureConfig:
    return features.FeatureConfig(aggregation=getattr(args, "agg", "mean_std_pool"))


def _manifest_root(path) -> str:
    return os.path.dirname(os.path.abspath(path))


def _cmd_synth(args) -> int:
    if args.write_spec:
        with open(args.write_spec, "w", encoding="utf-8") as fh:
            json.dump(dataset.default_recipe(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"recipe written to {args.write_spec}")
        return 0
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            recipe = json.load(fh)
    else:
        recipe = dataset.default_recipe()
    entries = dataset.synth_generate(recipe, args.seed, args.out)
    print(f"{len(entries)} entries written to {args.out}")
    return 0


def _cmd_split(args) -> int:
    entries = dataset.load_manifest(args.manifest)
    entries = dataset.split(entries, args.fraction, args.seed)
    out = args.out or args.manifest
    dataset.save_manifest(entries, out)
    n_train = sum(1 for e in entries if e.split == "train")
    print(f"{n_train} train / {len(entries) - n_train} test -> {out}")
    return 0


def _cmd_train(args) -> int:
    entries = dataset.load_manifest(args.manifest)
    rule_model, summary = train_rule_model(
        entries, _manifest_root(args.manifest), args.rule,
        args.c, args.gamma, args.seed, _feature_config(args),
    )
    persistence.save_model(rule_model, args.model)
    print(f"rule={summary['rule_id']} support_vectors={summary['n_support']} "
          f"holdout_accuracy={summary['holdout_accuracy']:.4f} "
          f"tau_right={summary['tau_right']:.4f} tau_wrong={summary['tau_wrong']:.4f}")
    if summary["saturated"]:
        print("warning: a threshold clamped at 0.99; negatives score close to certain",
              file=sys.stderr)
    return 0


def _cmd_gridsearch(args) -> int:
    entries = dataset.load_manifest(args.manifest)
    config = _feature_config(args)
    root = _manifest_root(args.manifest)
    train_entries = [e for e in entries
                     if e.rule_id == args.rule and e.split == "train"
                     and e.polarity in dataset.POLARITIES and e.onset_s is None]
    if not train_entries:
        raise MissingStratum(f"manifest has no train-split exemplars for {args.rule}")
    bank = features.build_filterbank(config)
    X = np.vstack([
        features.extract_features(
            _load_exemplar(dataset.resolve_path(root, e.path), config), config, bank
        ).values
        for e in train_entries
    ])
    y = np.array([1.0 if e.polarity == "Right" else -1.0 for e in train_entries])
    scaler = features.fit_scaler(X)
    problem = svm.TrainingProblem(scaler.apply(X), y)
    result = svm.grid_search(
        problem,
        C_grid=args.c_grid,
        gamma_grid=args.gamma_grid,
        k_folds=args.folds,
        seed=args.seed,
    )
    print("C,gamma,cv_accuracy")
    for cell in result.table:
        print(f"{cell.C},{cell.gamma},{cell.accuracy:.4f}")
    print(f"best: C={result.best_C} gamma={result.best_gamma}")
    return 0


def _cmd_evaluate(args) -> int:
    entries = dataset.load_manifest(args.manifest)
    rules = [persistence.load_model(p) for p in args.model]
    known = {r.rule_id for r in rules}
    test_entries = [e for e in entries
                    if e.split == "test" and e.polarity in dataset.POLARITIES
                    and e.onset_s is None and e.rule_id in known]
    result = detection.evaluate(rules, test_entries, _manifest_root(args.manifest))
    print(detection.format_confusion_tables(result))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["rule_id", "tp", "fp", "tn", "fn", "accuracy"])
            for t in result.tables:
                writer.writerow([t.rule_id, t.tp, t.fp, t.tn, t.fn, f"{t.accuracy:.6f}"])
    return 0


def _cmd_detect(args) -> int:
    rule = persistence.load_model(args.model)
    if args.rule != rule.rule_id:
        raise DetectionError(f"model is for {rule.rule_id}, not {args.rule}")
    clip = audio.load_wav(args.audio)
    if clip.sample_rate_hz != rule.feature_config.sample_rate_hz:
        clip = audio.resample(clip, rule.feature_config.sample_rate_hz)
    report = detection.detect(rule, clip)

    if report.verdict is None:
        print("none")
    else:
        v = report.verdict
        print(f"{v.polarity} {v.closeness_pct}% at {v.offset_s:.1f}s")

    if args.out:
        rows = detection.timeline_rows(report, rule, truth_s=args.truth)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    if args.verdict_out:
        verdict = None
        if report.verdict is not None:
            v = report.verdict
            verdict = {"offset_s": v.offset_s, "polarity": v.polarity,
                       "score": v.score, "closeness_pct": v.closeness_pct}
        with open(args.verdict_out, "w", encoding="utf-8") as fh:
            json.dump({"audio_path": args.audio, "rule_id": rule.rule_id,
                       "verdict": verdict}, fh, sort_keys=True)
            fh.write("\n")
    return 0


def _cmd_review(args) -> int:
    if args.review_cmd == "append":
        with open(args.verdict, encoding="utf-8") as fh:
            payload = json.load(fh)
        record = dataset.ReviewRecord(
            record_id=None,
            audio_path=payload["audio_path"],
            rule_id=payload["rule_id"],
            verdict=payload.get("verdict"),
        )
        stored = dataset.review_append(args.queue, record)
        print(f"record {stored.record_id} appended")
    elif args.review_cmd == "list":
        for r in dataset.review_list(args.queue, status=args.status):
            print(json.dumps({
                "record_id": r.record_id, "audio_path": r.audio_path,
                "rule_id": r.rule_id, "status": r.status,
                "corrected_label": r.corrected_label, "verdict": r.verdict,
                "created_at": r.created_at,
            }, sort_keys=True))
    else:
        r = dataset.review_label(args.queue, args.id, args.status,
                                 label=args.label, force=args.force)
        print(f"record {r.record_id} -> {r.status}")
    return 0


def _float_list(text):
    return tuple(float(x) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tajweed",
        description="Recitation-rule recognition: train, tune, evaluate, detect.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", help="recipe JSON (defaults to the built-in recipe)")
    p.add_argument("--seed", type=int, help="generation seed")
    p.add_argument("--out", help="output corpus directory")
    p.add_argument("--write-spec", help="dump the built-in recipe to a file and exit")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("split", help="assign stratified train/test splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output manifest (default: in place)")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train one rule model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rule", required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--agg", choices=features.AGGREGATIONS, default="mean_std_pool")
    p.add_argument("--model", required=True, help="output model path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("gridsearch", help="cross-validated (C, gamma) search")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rule", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--c-grid", type=_float_list, default=(0.1, 1.0, 10.0, 100.0))
    p.add_argument("--gamma-grid", type=_float_list, default=(0.001, 0.01, 0.1, 1.0))
    p.add_argument("--agg", choices=features.AGGREGATIONS, default="mean_std_pool")
    p.set_defaults(func=_cmd_gridsearch)

    p = sub.add_parser("evaluate", help="confusion tables on the test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", action="append", required=True,
                   help="model path (repeatable)")
    p.add_argument("--out", help="optional CSV output")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("detect", help="locate a rule inside a recording")
    p.add_argument("--audio", required=True)
    p.add_argument("--rule", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="timeline CSV path")
    p.add_argument("--truth", type=float, help="expert onset for the timeline")
    p.add_argument("--verdict-out", help="verdict JSON (feeds review append)")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("review", help="expert review queue")
    rsub = p.add_subparsers(dest="review_cmd", required=True)
    pa = rsub.add_parser("append")
    pa.add_argument("--queue", required=True)
    pa.add_argument("--verdict", required=True, help="verdict JSON from detect")
    pl = rsub.add_parser("list")
    pl.add_argument("--queue", required=True)
    pl.add_argument("--status", choices=("pending", "approved", "corrected"))
    pb = rsub.add_parser("label")
    pb.add_argument("--queue", required=True)
    pb.add_argument("--id", type=int, required=True)
    pb.add_argument("--status", required=True, choices=("approved", "corrected"))
    pb.add_argument("--label", choices=dataset.POLARITIES)
    pb.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_review)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cmd == "synth" and not args.write_spec:
        if args.seed is None or args.out is None:
            parser.error("synth requires --seed and --out")
    try:
        return args.func(args)
    except TajweedError as err:
        print(f"error: {err}", file=sys.stderr)
        for family, code in EXIT_CODES:
            if isinstance(err, family):
                return code
        return 1
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
