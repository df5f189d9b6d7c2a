"""Command-line entry point.

Every stage reads its inputs from disk and writes a JSON report (sorted keys)
plus any artifacts into ``--out``.  Exit codes: 0 success, 1 data/validation
error (a JSON error document goes to stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import _accel
from . import autoencoder as ae
from . import clustering as cl
from . import model_search as ms
from . import preprocess as pp
from . import stats as st
from . import synthetic as syn
from . import trajectory_io as tio
from .errors import TrailmarkError

STAGES = ("ingest", "preprocess", "embed", "cluster", "agree", "utest", "search", "predict", "synth", "pipeline")
AE_GRIDS = ("default", "small")


@dataclass
class RunConfig:
    trials: str = ""
    labels: str = ""
    out: str = "trailmark_out"
    fps: float = pp.STANDARD_FPS
    coverage_threshold: float = tio.DEFAULT_COVERAGE_THRESHOLD
    smooth_window: int = pp.DEFAULT_SMOOTH_WINDOW
    ae_grid: str = "default"
    holdout_fraction: float = 0.2
    kmax: int = 0  # 0 = min(10, n - 1)
    budget: int = 10000
    population: int = 50
    folds: int = 5
    seed: int = 0
    task: str = "all"

    def validate(self):
        if self.fps <= 0:
            raise TrailmarkError("fps must be positive")
        if not 0 < self.coverage_threshold <= 1:
            raise TrailmarkError("coverage-threshold must lie in (0, 1]")
        if self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise TrailmarkError("smooth-window must be a positive odd integer")
        if self.ae_grid not in AE_GRIDS:
            raise TrailmarkError(f"ae-grid must be one of {AE_GRIDS}")
        if not 0 < self.holdout_fraction < 1:
            raise TrailmarkError("holdout-fraction must lie in (0, 1)")
        if self.kmax and self.kmax < 3:
            raise TrailmarkError("kmax must be at least 3")
        if self.budget < 1 or self.population < 1 or self.folds < 2:
            raise TrailmarkError("budget, population must be positive and folds >= 2")
        if self.seed < 0:
            raise TrailmarkError("seed must be nonnegative")

    def hash(self) -> str:
        """Digest of the analysis parameters (paths excluded)."""
        params = {k: v for k, v in asdict(self).items() if k not in ("trials", "labels", "out")}
        blob = json.dumps(params, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_STAGE_INDEX = {name: i for i, name in enumerate(STAGES)}


def stage_seed(seed: int, stage: str) -> int:
    ss = np.random.SeedSequence([seed, _STAGE_INDEX[stage]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def ae_grid(name: str, seed: int) -> list:
    if name == "small":
        return [ae.AEHyper((4, 4), lr, 40, 8, seed) for lr in (1e-2, 1e-3)]
    return ae.default_grid(seed)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment; dashes equal underscores."""
    known = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TrailmarkError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise TrailmarkError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def _coerce(cfg: RunConfig, key: str, value):
    default = getattr(RunConfig, key)
    try:
        if isinstance(default, bool):
            return str(value).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise TrailmarkError(f"bad value for {key}: {value!r}") from None
    return str(value)


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            setattr(cfg, key, _coerce(cfg, key, value))
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, _coerce(cfg, f.name, value))
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def write_json(path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _finite(x):
    """JSON-safe float: NaN/inf become None."""
    return float(x) if x is not None and np.isfinite(x) else None


def _report_header(cfg: RunConfig, stage: str) -> dict:
    return {"stage": stage, "config_hash": cfg.hash(), "stage_seed": stage_seed(cfg.seed, stage)}


def _need(value, flag):
    if not value:
        raise TrailmarkError(f"{flag} is required for this command")
    return value


def load_trials(trial_dir) -> list:
    paths = sorted(glob.glob(os.path.join(trial_dir, "*.json")))
    if not paths:
        raise TrailmarkError(f"no trial documents (*.json) in {trial_dir}")
    trials = []
    for path in paths:
        with open(path, "rb") as fh:
            try:
                trials.append(tio.parse_trial(fh))
            except TrailmarkError as exc:
                raise type(exc)(f"{os.path.basename(path)}: {exc}") from None
    return trials


def load_label_file(path) -> dict:
    with open(path, "rb") as fh:
        return {rec.trial_id: rec for rec in tio.load_labels(fh)}


def _load_npz(path, *keys):
    if not os.path.exists(path):
        raise TrailmarkError(f"missing input {path}")
    with np.load(path, allow_pickle=False) as data:
        return [data[k] for k in keys]


def parse_tasks(text: str) -> list:
    """``all``, ``score``, ``cbarq:EXC`` or a comma-separated mix."""
    tasks = []
    for part in (p.strip() for p in text.split(",") if p.strip()):
        if part == "all":
            tasks.append("score")
            tasks.extend(f"cbarq:{c}" for c in tio.FACTOR_CODES)
        elif part == "score":
            tasks.append(part)
        elif part.startswith("cbarq:") and part[6:].upper() in tio.FACTOR_CODES:
            tasks.append("cbarq:" + part[6:].upper())
        else:
            raise TrailmarkError(f"unknown task {part!r}")
    out = []
    for t in tasks:
        if t not in out:
            out.append(t)
    if not out:
        raise TrailmarkError("no task given")
    return out


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def stage_ingest(cfg: RunConfig, trials=None) -> tuple:
    if trials is None:
        trials = load_trials(_need(cfg.trials, "--trials"))
    kept, excluded = tio.quality_gate(trials, cfg.coverage_threshold)
    kept_ids = {t.trial_id for t in kept}
    report = {
        **_report_header(cfg, "ingest"),
        "coverage_threshold": cfg.coverage_threshold,
        "trials": [
            {
                "trial_id": t.trial_id,
                "frames": len(t.frames),
                "fps_native": t.fps_native,
                "duration_s": t.duration_s,
                "coverage": tio.detection_coverage(t),
                "clamp_count": t.clamp_count,
                "kept": t.trial_id in kept_ids,
            }
            for t in trials
        ],
        "kept": [t.trial_id for t in kept],
        "excluded": [t.trial_id for t in excluded],
    }
    return kept, report


def stage_preprocess(cfg: RunConfig, kept, dump_dir=None) -> tuple:
    if not kept:
        raise TrailmarkError("no trials passed the coverage gate")
    series = [pp.prepare_trial(t, cfg.fps, cfg.smooth_window) for t in kept]
    dataset = pp.standardize_lengths(series)
    tensor = pp.build_matrix(dataset)
    if dump_dir:
        os.makedirs(dump_dir, exist_ok=True)
        for s in dataset.samples:
            pp.write_series_csv(s, os.path.join(dump_dir, f"{s.trial_id}.csv"))
    report = {
        **_report_header(cfg, "preprocess"),
        "fps": dataset.fps,
        "smooth_window": cfg.smooth_window,
        "n": len(dataset),
        "m": dataset.m,
        "shape": list(tensor.shape),
        "channels": list(pp.CHANNELS),
        "original_lengths": {s.trial_id: s.m for s in series},
        "trial_ids": dataset.trial_ids,
    }
    return dataset.trial_ids, tensor, report


def stage_embed(cfg: RunConfig, tensor) -> tuple:
    seed = stage_seed(cfg.seed, "embed")
    grid = ae_grid(cfg.ae_grid, seed)
    result = ae.grid_search_ae(tensor, grid, cfg.holdout_fraction, seed, _accel.worker_count())
    params, curve = ae.train_autoencoder(tensor, result.best)
    vectors = ae.encode(params, tensor, result.best.relu)
    report = {
        **_report_header(cfg, "embed"),
        "grid": cfg.ae_grid,
        "holdout_fraction": cfg.holdout_fraction,
        "holdout_trials": list(result.holdout_index),
        "grid_scores": [{"hyper": h.to_dict(), "holdout_mae": s} for h, s in result.scores],
        "best_hyper": result.best.to_dict(),
        "loss_curve": curve,
        "final_mae": curve[-1] if curve else ae.eval_loss(params, tensor),
        "latent_length": int(vectors.shape[1]),
    }
    return params, result.best, vectors, report


def stage_cluster(cfg: RunConfig, trial_ids, vectors, labels=None) -> tuple:
    seed = stage_seed(cfg.seed, "cluster")
    kmax = cfg.kmax or cl.default_kmax(len(vectors))
    analysis = cl.analyze(vectors, seed, kmax)
    per_trial = analysis.assignment_for_all(len(vectors))
    report = {
        **_report_header(cfg, "cluster"),
        "k": analysis.chosen_k,
        "seed": seed,
        "kmax": kmax,
        "inertia_by_k": {str(k): v for k, v in analysis.inertia_by_k.items()},
        "chord_distance_by_k": {str(k): v for k, v in cl.chord_distances(analysis.inertia_by_k).items()},
        "degenerate_elbow": analysis.degenerate_elbow,
        "assignments": {tid: a for tid, a in zip(trial_ids, per_trial)},
        "centroids": analysis.model.centroids,
        "inertia": analysis.model.inertia,
        "outliers": [trial_ids[i] for i in analysis.outliers],
    }
    if labels is not None:
        report["cross_tab"] = cluster_cross_tab(report["assignments"], labels)
    return report


def cluster_cross_tab(assignments: dict, labels: dict):
    pairs = [
        (a, labels[tid].final_sign)
        for tid, a in assignments.items()
        if a is not None and tid in labels and labels[tid].final_sign is not None
    ]
    if not pairs:
        return None
    return st.cross_tab([p[0] for p in pairs], [p[1] for p in pairs]).to_dict()


def stage_agree(cfg: RunConfig, labels: dict) -> dict:
    if not labels:
        raise TrailmarkError("label file has no rows")
    panel, subjects = [], []
    for tid, rec in labels.items():
        signs = [st.collapse_5_to_sign(s) for s in rec.rater_scores]
        panel.append(signs)
        subjects.append({"trial_id": tid, "rater_signs": signs, "final_sign": rec.final_sign})
    agreement = st.percent_agreement(panel)
    return {
        **_report_header(cfg, "agree"),
        "n": len(panel),
        "categories": len(tio.SIGN_CLASSES),
        "percent_agreement": agreement,
        "free_marginal_kappa": st.free_marginal_kappa(agreement, len(tio.SIGN_CLASSES)),
        "subjects": subjects,
        "final_label_counts": {s: sum(1 for x in subjects if x["final_sign"] == s) for s in tio.SIGN_CLASSES},
        "no_majority": [x["trial_id"] for x in subjects if x["final_sign"] is None],
    }


def stage_utest(cfg: RunConfig, assignments: dict, labels: dict) -> dict:
    sizes = {}
    for a in assignments.values():
        if a is not None:
            sizes[a] = sizes.get(a, 0) + 1
    # compare the two largest clusters (the only pair when k = 2)
    pair = sorted(sorted(sizes), key=lambda c: -sizes[c])[:2]
    factors = {}
    if len(pair) == 2:
        pair.sort()
        for code in tio.FACTOR_CODES:
            groups = [
                [labels[t].cbarq[code] for t, a in assignments.items()
                 if a == c and t in labels and labels[t].cbarq is not None]
                for c in pair
            ]
            entry = {"n": [len(g) for g in groups],
                     "medians": [float(np.median(g)) if g else None for g in groups]}
            try:
                res = st.mann_whitney(groups[0], groups[1])
                entry.update(U=res.U, z=res.z, p=res.p_two_sided, method=res.method)
            except (TrailmarkError, ValueError) as exc:
                entry.update(U=None, z=None, p=None, method=None, error=str(exc))
            factors[code] = entry
    return {
        **_report_header(cfg, "utest"),
        "clusters_compared": pair,
        "factors": factors,
    }


def _task_targets(task: str, trial_ids, vectors, labels: dict):
    if task == "score":
        rows = [(i, labels[t].final_sign) for i, t in enumerate(trial_ids)
                if t in labels and labels[t].final_sign is not None]
        kind = ms.CLASSIFICATION
        y = np.array([r[1] for r in rows])
    else:
        code = task.split(":", 1)[1]
        rows = [(i, labels[t].cbarq[code] / 4.0) for i, t in enumerate(trial_ids)
                if t in labels and labels[t].cbarq is not None]
        kind = ms.REGRESSION
        y = np.array([r[1] for r in rows], dtype=float)
    idx = [r[0] for r in rows]
    return kind, vectors[idx], y, [trial_ids[i] for i in idx]


def stage_search(cfg: RunConfig, task: str, trial_ids, vectors, labels: dict) -> tuple:
    seed = stage_seed(cfg.seed, "search")
    kind, X, y, ids = _task_targets(task, trial_ids, vectors, labels)
    folds = min(cfg.folds, len(X))
    if len(X) < 2 or folds < 2:
        raise TrailmarkError(f"task {task}: too few labeled samples ({len(X)})")
    budget = ms.SearchBudget(cfg.budget, min(cfg.population, cfg.budget))
    result = ms.evolve_pipelines(X, y, kind, budget, seed, folds, _accel.worker_count())
    cv = ms.cross_validate(result.best, X, y, kind, folds, seed)
    fitted = ms.fit_pipeline(result.best, X, y, kind, seed)
    train_pred = fitted.predict(X)
    report = {
        **_report_header(cfg, "search"),
        "task": task,
        "kind": kind,
        "n": len(X),
        "folds": folds,
        "budget": {"max_evaluations": budget.max_evaluations, "population": budget.population},
        **result.to_dict(kind),
        "evaluation_log": result.log,
    }
    if kind == ms.CLASSIFICATION:
        report["cv_metrics"] = {name: cv.mean_metric(name) for name in ("accuracy", "precision", "recall", "f1")}
        report["per_fold_metrics"] = [m.to_dict() for m in cv.fold_metrics]
        report["final_refit_metrics"] = ms.classification_metrics(y.astype(str), train_pred).to_dict()
    else:
        report["cv_metrics"] = {
            "mae": cv.mean_metric("mae"),
            "mse": cv.mean_metric("mse"),
            "r2": _finite(np.nanmean([m.r2 for m in cv.fold_metrics]))
            if any(np.isfinite(m.r2) for m in cv.fold_metrics) else None,
            "mae_raw_scale": 4.0 * cv.mean_metric("mae"),
            "mse_raw_scale": 16.0 * cv.mean_metric("mse"),
        }
        report["per_fold_metrics"] = [
            {"mae": m.mae, "mse": m.mse, "r2": _finite(m.r2)} for m in cv.fold_metrics
        ]
        try:
            report["final_refit_metrics"] = ms.regression_metrics(y, train_pred).to_dict()
        except TrailmarkError:
            report["final_refit_metrics"] = None
    artifact = ms.model_artifact(result.best, kind, seed, X, y, ids)
    artifact["target"] = task
    return report, artifact


def _task_slug(task: str) -> str:
    return task.replace(":", "_").lower()


# ---------------------------------------------------------------------------
# command handlers
# ---------------------------------------------------------------------------


def cmd_ingest(cfg, args):
    _, report = stage_ingest(cfg)
    write_json(os.path.join(cfg.out, "ingest_report.json"), report)


def cmd_preprocess(cfg, args):
    kept, ingest_report = stage_ingest(cfg)
    dump = os.path.join(cfg.out, "series") if args.dump_series else None
    ids, tensor, report = stage_preprocess(cfg, kept, dump)
    report["excluded"] = ingest_report["excluded"]
    np.savez(os.path.join(cfg.out, "dataset.npz"), tensor=tensor, trial_ids=np.array(ids), fps=cfg.fps)
    write_json(os.path.join(cfg.out, "preprocess_report.json"), report)


def cmd_embed(cfg, args):
    path = args.dataset or os.path.join(cfg.out, "dataset.npz")
    tensor, ids = _load_npz(path, "tensor", "trial_ids")
    params, hyper, vectors, report = stage_embed(cfg, tensor)
    ae.save_checkpoint(os.path.join(cfg.out, "ae_checkpoint.json"), params, hyper)
    np.savez(os.path.join(cfg.out, "embeddings.npz"), vectors=vectors, trial_ids=ids)
    write_json(os.path.join(cfg.out, "embed_report.json"), report)


def cmd_cluster(cfg, args):
    path = args.embeddings or os.path.join(cfg.out, "embeddings.npz")
    vectors, ids = _load_npz(path, "vectors", "trial_ids")
    labels = load_label_file(cfg.labels) if cfg.labels else None
    report = stage_cluster(cfg, [str(t) for t in ids], vectors, labels)
    write_json(os.path.join(cfg.out, "cluster_report.json"), report)


def cmd_agree(cfg, args):
    labels = load_label_file(_need(cfg.labels, "--labels"))
    write_json(os.path.join(cfg.out, "agreement_report.json"), stage_agree(cfg, labels))


def cmd_utest(cfg, args):
    labels = load_label_file(_need(cfg.labels, "--labels"))
    path = args.clusters or os.path.join(cfg.out, "cluster_report.json")
    if not os.path.exists(path):
        raise TrailmarkError(f"missing input {path}")
    with open(path) as fh:
        assignments = json.load(fh)["assignments"]
    write_json(os.path.join(cfg.out, "utest_report.json"), stage_utest(cfg, assignments, labels))


def cmd_search(cfg, args):
    labels = load_label_file(_need(cfg.labels, "--labels"))
    path = args.embeddings or os.path.join(cfg.out, "embeddings.npz")
    vectors, ids = _load_npz(path, "vectors", "trial_ids")
    for task in parse_tasks(cfg.task):
        report, artifact = stage_search(cfg, task, [str(t) for t in ids], vectors, labels)
        slug = _task_slug(task)
        write_json(os.path.join(cfg.out, f"search_{slug}.json"), report)
        write_json(os.path.join(cfg.out, f"model_{slug}.json"), artifact)


def cmd_predict(cfg, args):
    model_path = _need(args.model, "--model")
    with open(model_path) as fh:
        doc = json.load(fh)
    try:
        pipe = ms.load_model(doc)
    except (KeyError, ValueError) as exc:
        raise TrailmarkError(f"bad model artifact: {exc}") from None
    path = args.embeddings or os.path.join(cfg.out, "embeddings.npz")
    vectors, ids = _load_npz(path, "vectors", "trial_ids")
    pred = pipe.predict(vectors)
    values = [str(p) for p in pred] if doc["task"] == ms.CLASSIFICATION else [float(p) for p in pred]
    report = {
        **_report_header(cfg, "predict"),
        "target": doc.get("target"),
        "task": doc["task"],
        "predictions": {str(t): v for t, v in zip(ids, values)},
    }
    if doc["task"] == ms.REGRESSION:
        report["predictions_raw_scale"] = {str(t): 4.0 * v for t, v in zip(ids, values)}
    write_json(os.path.join(cfg.out, "predictions.json"), report)


def cmd_synth(cfg, args):
    profiles = [p.strip() for p in args.profiles.split(",") if p.strip()]
    try:
        events = tuple(float(t) for t in args.events.split(",") if t.strip())
    except ValueError:
        raise TrailmarkError(f"bad --events value {args.events!r}") from None
    config = syn.GenConfig(duration_s=args.duration, fps=cfg.fps, missing_rate=args.missing_rate,
                           event_times_s=events, seed=cfg.seed)
    corpus = syn.gen_dataset(args.n_per_profile, profiles, config, args.rater_confusion)
    syn.write_corpus(corpus, cfg.out)


def run_pipeline(cfg: RunConfig) -> dict:
    """All stages in order; returns the consolidated report."""
    trials = load_trials(_need(cfg.trials, "--trials"))
    labels = load_label_file(_need(cfg.labels, "--labels"))
    stages = {}
    kept, stages["ingest"] = stage_ingest(cfg, trials)
    ids, tensor, stages["preprocess"] = stage_preprocess(cfg, kept)
    params, hyper, vectors, stages["embed"] = stage_embed(cfg, tensor)
    stages["cluster"] = stage_cluster(cfg, ids, vectors, labels)
    stages["agree"] = stage_agree(cfg, labels)
    stages["utest"] = stage_utest(cfg, stages["cluster"]["assignments"], labels)
    searches = {}
    for task in parse_tasks(cfg.task):
        report, _ = stage_search(cfg, task, ids, vectors, labels)
        searches[task] = report
    cluster = stages["cluster"]
    return {
        "stage": "pipeline",
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("trials", "labels", "out")},
        "coverage_table": [
            {k: row[k] for k in ("trial_id", "coverage", "clamp_count", "kept")}
            for row in stages["ingest"]["trials"]
        ],
        "excluded_trials": stages["ingest"]["excluded"],
        "dataset_shape": stages["preprocess"]["shape"],
        "ae": {k: stages["embed"][k] for k in ("best_hyper", "grid_scores", "loss_curve", "final_mae",
                                               "latent_length", "stage_seed")},
        "inertia_by_k": cluster["inertia_by_k"],
        "chosen_k": cluster["k"],
        "degenerate_elbow": cluster["degenerate_elbow"],
        "outliers": cluster["outliers"],
        "assignments": cluster["assignments"],
        "cross_tab": cluster.get("cross_tab"),
        "agreement": {k: stages["agree"][k] for k in ("n", "percent_agreement", "free_marginal_kappa",
                                                       "final_label_counts", "no_majority")},
        "utest": stages["utest"],
        "search": searches,
    }


def cmd_pipeline(cfg, args):
    report = run_pipeline(cfg)
    write_json(os.path.join(cfg.out, "pipeline_report.json"), report)


HANDLERS = {
    "ingest": cmd_ingest, "preprocess": cmd_preprocess, "embed": cmd_embed, "cluster": cmd_cluster,
    "agree": cmd_agree, "utest": cmd_utest, "search": cmd_search, "predict": cmd_predict,
    "synth": cmd_synth, "pipeline": cmd_pipeline,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    # defaults are None so that config-file values survive unless a flag is given
    p.add_argument("--config", metavar="PATH", help="flat key=value config file (flags win)")
    p.add_argument("--seed", type=int, help="global seed (default 0)")
    p.add_argument("--out", metavar="DIR", help="output directory (default trailmark_out)")
    p.add_argument("--fps", type=float, help="standard frame rate (default 24)")
    p.add_argument("--coverage-threshold", dest="coverage_threshold", type=float,
                   help="minimum fraction of frames with dog and person (default 0.8)")
    p.add_argument("--smooth-window", dest="smooth_window", type=int, help="odd moving-average window (default 5)")
    p.add_argument("--ae-grid", dest="ae_grid", choices=AE_GRIDS, help="autoencoder grid (default: default)")
    p.add_argument("--holdout-fraction", dest="holdout_fraction", type=float)
    p.add_argument("--kmax", type=int, help="largest k for the elbow curve (default min(10, n-1))")
    p.add_argument("--budget", type=int, help="max pipeline evaluations per search (default 10000)")
    p.add_argument("--population", type=int, help="GA population (default 50)")
    p.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    p.add_argument("--task", help="score | cbarq:<FACTOR> | all, comma-separated")
    p.add_argument("--trials", metavar="DIR", help="directory of trial documents")
    p.add_argument("--labels", metavar="CSV", help="label file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trailmark",
        description="Trajectory embeddings, clustering and scoring models for behavioral-test recordings.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    helps = {
        "ingest": "parse trial documents and apply the coverage gate",
        "preprocess": "resample, fill gaps, smooth and stack gated trials",
        "embed": "grid-search and train the autoencoder, write movement vectors",
        "cluster": "k-means with elbow k selection and outlier exclusion",
        "agree": "rater agreement and free-marginal kappa",
        "utest": "Mann-Whitney U tests of questionnaire factors between clusters",
        "search": "genetic pipeline search for a score or factor target",
        "predict": "apply a saved model artifact to movement vectors",
        "synth": "generate a synthetic labeled corpus",
        "pipeline": "run every stage and write one consolidated report",
    }
    parsers = {}
    for name in STAGES:
        parsers[name] = p = sub.add_parser(name, help=helps[name], description=helps[name])
        _common(p)
    parsers["preprocess"].add_argument("--dump-series", action="store_true",
                                       help="also write one CSV per trial")
    for name in ("embed",):
        parsers[name].add_argument("--dataset", metavar="NPZ")
    for name in ("cluster", "search", "predict"):
        parsers[name].add_argument("--embeddings", metavar="NPZ")
    parsers["utest"].add_argument("--clusters", metavar="JSON")
    parsers["predict"].add_argument("--model", metavar="JSON")
    synth = parsers["synth"]
    synth.add_argument("--n-per-profile", dest="n_per_profile", type=int, default=25)
    synth.add_argument("--profiles", default="Neutral,Excessive")
    synth.add_argument("--duration", type=float, default=60.0)
    synth.add_argument("--events", default="10,20,30", help="stimulus times in seconds")
    synth.add_argument("--missing-rate", dest="missing_rate", type=float, default=0.05)
    synth.add_argument("--rater-confusion", dest="rater_confusion", type=float,
                       default=syn.DEFAULT_RATER_CONFUSION)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors, 0 on --help
    stage = args.command
    try:
        cfg = build_config(args)
        os.makedirs(cfg.out, exist_ok=True)
        HANDLERS[stage](cfg, args)
    except TrailmarkError as exc:
        err = {"error": type(exc).__name__, "stage": stage, "message": str(exc)}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 1
    except OSError as exc:
        err = {"error": type(exc).__name__, "stage": stage, "message": str(exc)}
        sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
        return 1
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
