"""Budgeted genetic search over small ML pipelines, plus the metric suite.

A pipeline is ``reducer -> scaler -> model``.  The reducer keeps the
highest-variance raw features; the scaler standardizes or min-max scales them;
the model is one of four estimator families.  Every transform is fitted on the
training fold only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BudgetTooSmall,
    ConstantTruth,
    DimensionMismatch,
    LengthMismatch,
    TooFewSamples,
)

CLASSIFICATION, REGRESSION = "classification", "regression"
SCALERS = ("none", "standardize", "minmax")
REDUCERS = (None, 8, 16, 32)
FAMILIES = ("knn", "linear", "tree", "forest")
FAMILY_OPTIONS = {
    "knn": (1, 3, 5),
    "linear": (0.01, 0.1, 1.0),  # logistic (classification) or ridge (regression) penalty
    "tree": (2, 3, 5),
    "forest": ((25, 3), (25, 5), (100, 3), (100, 5)),
}
SEED_SLOTS = 4
GENE_SIZES = (len(SCALERS), len(REDUCERS), len(FAMILIES), max(map(len, FAMILY_OPTIONS.values())), SEED_SLOTS)
MODEL_FORMAT = "trailmark-model/1"


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsClassification:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_class: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class MetricsRegression:
    mae: float
    mse: float
    r2: float

    def to_dict(self):
        return asdict(self)


def _safe_div(a, b):
    return a / b if b else 0.0


def classification_metrics(y_true, y_pred) -> MetricsClassification:
    """Accuracy and macro precision/recall/F1 over the classes present in ``y_true``."""
    y_true, y_pred = list(y_true), list(y_pred)
    if len(y_true) != len(y_pred):
        raise LengthMismatch(f"{len(y_true)} truths vs {len(y_pred)} predictions")
    if not y_true:
        raise ValueError("metrics need at least one sample")
    correct = sum(t == p for t, p in zip(y_true, y_pred))
    per_class = {}
    for c in sorted(set(y_true), key=str):
        tp = sum(t == c and p == c for t, p in zip(y_true, y_pred))
        fp = sum(t != c and p == c for t, p in zip(y_true, y_pred))
        fn = sum(t == c and p != c for t, p in zip(y_true, y_pred))
        prec = _safe_div(tp, tp + fp)
        rec = _safe_div(tp, tp + fn)
        per_class[str(c)] = {"precision": prec, "recall": rec, "f1": _safe_div(2 * prec * rec, prec + rec)}
    vals = list(per_class.values())
    return MetricsClassification(
        accuracy=correct / len(y_true),
        precision=float(np.mean([v["precision"] for v in vals])),
        recall=float(np.mean([v["recall"] for v in vals])),
        f1=float(np.mean([v["f1"] for v in vals])),
        per_class=per_class,
    )


def regression_metrics(y_true, y_pred) -> MetricsRegression:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise LengthMismatch(f"{y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("metrics need at least one sample")
    resid = y_true - y_pred
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0:
        raise ConstantTruth("R^2 is undefined for a constant target")
    ss_res = float(np.sum(resid ** 2))
    return MetricsRegression(
        mae=float(np.mean(np.abs(resid))),
        mse=ss_res / y_true.size,
        r2=1.0 - ss_res / ss_tot,
    )


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------


def kfold_split(n: int, folds: int, labels: Optional[Sequence] = None, seed: int = 0) -> list:
    """Disjoint test-index folds covering ``range(n)``.

    With ``labels`` each class is shuffled and dealt round-robin, continuing
    where the previous class stopped, so per-fold class counts stay within one
    of proportional and fold sizes within one of each other.
    """
    if folds < 2 or folds > n:
        raise TooFewSamples(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(folds)]
    if labels is None:
        groups = [np.arange(n)]
    else:
        labels = list(labels)
        if len(labels) != n:
            raise LengthMismatch("labels must have length n")
        classes = sorted(set(labels), key=str)
        groups = [np.array([i for i, y in enumerate(labels) if y == c]) for c in classes]
    slot = 0
    for members in groups:
        for i in rng.permutation(members):
            buckets[slot].append(int(i))
            slot = (slot + 1) % folds
    return [sorted(b) for b in buckets]


# ---------------------------------------------------------------------------
# genomes and pipelines
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineGenome:
    scaler: int
    reducer: int
    family: int
    param: int
    seed_slot: int

    @classmethod
    def random(cls, rng: np.random.Generator) -> "PipelineGenome":
        return cls(*(int(rng.integers(s)) for s in GENE_SIZES))

    @property
    def genes(self) -> tuple:
        return (self.scaler, self.reducer, self.family, self.param, self.seed_slot)

    @property
    def family_name(self) -> str:
        return FAMILIES[self.family]

    @property
    def option(self):
        opts = FAMILY_OPTIONS[self.family_name]
        return opts[self.param % len(opts)]

    def canonical(self) -> tuple:
        """Identity used for caching: the modulo-reduced parameter, and the
        seed slot only for families that consume randomness."""
        seed = self.seed_slot if self.family_name in ("tree", "forest") else 0
        opts = FAMILY_OPTIONS[self.family_name]
        return (self.scaler, self.reducer, self.family, self.param % len(opts), seed)

    def describe(self, task: str) -> dict:
        fam = self.family_name
        opt = self.option
        if fam == "knn":
            model = {"model": "k-nearest-neighbors", "k": opt}
        elif fam == "linear":
            name = "regularized-logistic" if task == CLASSIFICATION else "ridge"
            model = {"model": name, "lambda": opt}
        elif fam == "tree":
            model = {"model": "decision-tree", "depth": opt}
        else:
            model = {"model": "random-forest", "trees": opt[0], "depth": opt[1]}
        reducer = REDUCERS[self.reducer]
        return {
            "genes": list(self.genes),
            "scaler": SCALERS[self.scaler],
            "reducer": "none" if reducer is None else f"top-variance-{reducer}",
            **model,
            "seed_slot": self.canonical()[4],
        }


def genome_seed(run_seed: int, genome: PipelineGenome) -> int:
    key = f"{run_seed}:{','.join(map(str, genome.canonical()))}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=4).digest(), "little")


class _Constant:
    """Fallback model for a training fold holding one class or a flat target."""

    def fit(self, X, y):
        y = np.asarray(y)
        if y.dtype.kind in "fc":
            self.value = float(np.mean(y))
        else:
            values, counts = np.unique(y, return_counts=True)
            self.value = values[np.argmax(counts)]
        return self

    def predict(self, X):
        return np.full(len(X), self.value, dtype=object if isinstance(self.value, str) else float)


def _make_model(genome: PipelineGenome, task: str, seed: int):
    from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
    from sklearn.linear_model import LogisticRegression, Ridge
    from sklearn.neighbors import KNeighborsClassifier, KNeighborsRegressor
    from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

    fam, opt = genome.family_name, genome.option
    cls = task == CLASSIFICATION
    if fam == "knn":
        return (KNeighborsClassifier if cls else KNeighborsRegressor)(n_neighbors=opt)
    if fam == "linear":
        if cls:
            return LogisticRegression(C=1.0 / opt, max_iter=2000)
        return Ridge(alpha=opt)
    if fam == "tree":
        return (DecisionTreeClassifier if cls else DecisionTreeRegressor)(max_depth=opt, random_state=seed)
    trees, depth = opt
    return (RandomForestClassifier if cls else RandomForestRegressor)(
        n_estimators=trees, max_depth=depth, max_features="sqrt", random_state=seed, n_jobs=1
    )


class FittedPipeline:
    """A genome fitted on one training set."""

    def __init__(self, genome: PipelineGenome, task: str, seed: int = 0):
        if task not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task {task!r}")
        self.genome = genome
        self.task = task
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        self.n_features = X.shape[1]
        d = REDUCERS[self.genome.reducer]
        if d is None or d >= X.shape[1]:
            self.keep = np.arange(X.shape[1])
        else:
            var = X.var(axis=0)
            self.keep = np.sort(np.argsort(-var, kind="stable")[:d])
        Xr = X[:, self.keep]
        scaler = SCALERS[self.genome.scaler]
        if scaler == "standardize":
            self.center = Xr.mean(axis=0)
            sd = Xr.std(axis=0)
            self.scale = np.where(sd > 0, sd, 1.0)
        elif scaler == "minmax":
            self.center = Xr.min(axis=0)
            span = Xr.max(axis=0) - self.center
            self.scale = np.where(span > 0, span, 1.0)
        else:
            self.center = np.zeros(Xr.shape[1])
            self.scale = np.ones(Xr.shape[1])
        Xs = (Xr - self.center) / self.scale
        if self.task == CLASSIFICATION:
            y = y.astype(str)
            degenerate = len(np.unique(y)) < 2
        else:
            y = y.astype(float)
            degenerate = np.ptp(y) == 0
        model = _Constant() if degenerate else _make_model(self.genome, self.task, self.seed)
        if self.genome.family_name == "knn" and not degenerate:
            model.set_params(n_neighbors=min(model.n_neighbors, len(y)))
        self.model = model.fit(Xs, y)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        return (X[:, self.keep] - self.center) / self.scale

    def predict(self, X_new):
        X_new = np.asarray(X_new, dtype=float)
        if X_new.size == 0:
            return np.array([], dtype=object if self.task == CLASSIFICATION else float)
        if X_new.ndim != 2 or X_new.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X_new.shape}")
        out = self.model.predict(self.transform(X_new))
        if self.task == REGRESSION:
            return np.clip(np.asarray(out, dtype=float), 0.0, 1.0)
        return np.asarray(out).astype(str).astype(object)


def fit_pipeline(genome: PipelineGenome, X, y, task: str, seed: int = 0) -> FittedPipeline:
    return FittedPipeline(genome, task, genome_seed(seed, genome)).fit(X, y)


@dataclass(frozen=True)
class CVResult:
    score: float
    fold_metrics: tuple

    def mean_metric(self, name: str) -> float:
        return float(np.mean([getattr(m, name) for m in self.fold_metrics]))


def cross_validate(genome: PipelineGenome, X, y, task: str, folds: int = 5, seed: int = 0) -> CVResult:
    """Held-out fold metrics; the score is mean macro-F1 or minus mean MAE."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(X) == 0 or len(X) != len(y):
        raise LengthMismatch("X and y must be nonempty and aligned")
    strat = y.astype(str) if task == CLASSIFICATION else None
    splits = kfold_split(len(X), folds, strat, seed)
    gseed = genome_seed(seed, genome)
    metrics = []
    for test in splits:
        mask = np.ones(len(X), dtype=bool)
        mask[test] = False
        pipe = FittedPipeline(genome, task, gseed).fit(X[mask], y[mask])
        pred = pipe.predict(X[test])
        if task == CLASSIFICATION:
            metrics.append(classification_metrics(y[test].astype(str), pred))
        else:
            truth = y[test].astype(float)
            resid = truth - pred
            # per-fold R^2 is undefined on a flat fold, MAE/MSE are not
            if np.ptp(truth) > 0:
                metrics.append(regression_metrics(truth, pred))
            else:
                metrics.append(MetricsRegression(float(np.mean(np.abs(resid))),
                                                 float(np.mean(resid ** 2)), float("nan")))
    if task == CLASSIFICATION:
        score = float(np.mean([m.f1 for m in metrics]))
    else:
        score = -float(np.mean([m.mae for m in metrics]))
    return CVResult(score, tuple(metrics))


def evaluate_pipeline(genome: PipelineGenome, X, y, task: str, folds: int = 5, seed: int = 0) -> float:
    return cross_validate(genome, X, y, task, folds, seed).score


# ---------------------------------------------------------------------------
# genetic search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchBudget:
    max_evaluations: int = 10000
    population: int = 50
    stall_generations: int = 10

    def __post_init__(self):
        if self.max_evaluations < 1 or self.population < 1:
            raise BudgetTooSmall("budget and population must be positive")
        if self.max_evaluations < self.population:
            raise BudgetTooSmall(
                f"budget {self.max_evaluations} is smaller than population {self.population}"
            )

    @property
    def max_generations(self) -> int:
        return max(1, self.max_evaluations // self.population)


@dataclass
class SearchResult:
    best: PipelineGenome
    best_score: float
    log: list
    generations: list
    evaluations: int

    def to_dict(self, task: str) -> dict:
        return {
            "best_genome": self.best.describe(task),
            "best_score": self.best_score,
            "evaluations": self.evaluations,
            "generations": self.generations,
        }


TOURNAMENT = 3
CROSSOVER_RATE = 0.7
MUTATION_RATE = 0.2


def _tournament(pop, fitness, rng):
    picks = rng.integers(len(pop), size=TOURNAMENT)
    best = max(picks, key=lambda i: (fitness[i], -i))
    return pop[int(best)]


def _offspring(a: PipelineGenome, b: PipelineGenome, rng) -> PipelineGenome:
    genes = list(a.genes)
    if rng.random() < CROSSOVER_RATE:
        point = int(rng.integers(1, len(genes)))
        genes = list(a.genes[:point]) + list(b.genes[point:])
    for g, size in enumerate(GENE_SIZES):
        if rng.random() < MUTATION_RATE:
            genes[g] = int(rng.integers(size))
    return PipelineGenome(*genes)


def _evaluate_many(genomes, X, y, task, folds, seed, workers):
    def run(g):
        return evaluate_pipeline(g, X, y, task, folds, seed)

    if workers > 1 and len(genomes) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, genomes))
    return [run(g) for g in genomes]


def evolve_pipelines(X, y, task: str, budget: SearchBudget = SearchBudget(), seed: int = 0,
                     folds: int = 5, workers: int = 1) -> SearchResult:
    """Generational GA: tournament(3), one-point crossover(0.7), per-gene
    mutation(0.2), one elite.  Re-visiting a cached genome is free; the run
    stops at the evaluation budget, the generation cap, or after
    ``budget.stall_generations`` generations without improvement.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    pop = [PipelineGenome.random(rng) for _ in range(budget.population)]
    cache = {}
    log, generations = [], []
    best, best_score = None, -np.inf
    stall = 0
    exhausted = False
    for gen in range(budget.max_generations):
        fresh = []
        for g in pop:
            key = g.canonical()
            if key not in cache and key not in {f.canonical() for f in fresh}:
                fresh.append(g)
        room = budget.max_evaluations - len(log)
        if len(fresh) > room:
            dropped = {g.canonical() for g in fresh[room:]}
            fresh = fresh[:room]
            pop = [g for g in pop if g.canonical() not in dropped]
            exhausted = True
        for g, score in zip(fresh, _evaluate_many(fresh, X, y, task, folds, seed, workers)):
            cache[g.canonical()] = score
            log.append({"evaluation": len(log), "generation": gen, "genes": list(g.canonical()),
                        "score": score})
        if len(log) >= budget.max_evaluations:
            exhausted = True
        fitness = [cache[g.canonical()] for g in pop]
        improved = False
        for g, f in zip(pop, fitness):
            if f > best_score:
                best, best_score, improved = g, f, True
        stall = 0 if improved else stall + 1
        generations.append({
            "generation": gen,
            "best": best_score,
            "mean": float(np.mean(fitness)),
            "evaluations": len(log),
        })
        if exhausted or stall >= budget.stall_generations or gen + 1 >= budget.max_generations:
            break
        elite = pop[int(np.argmax(fitness))]
        children = [elite]
        while len(children) < budget.population:
            a = _tournament(pop, fitness, rng)
            b = _tournament(pop, fitness, rng)
            children.append(_offspring(a, b, rng))
        pop = children
    return SearchResult(best, float(best_score), log, generations, len(log))


def random_search(X, y, task: str, n: int, seed: int = 0, folds: int = 5) -> SearchResult:
    """Best of ``n`` uniformly drawn genomes (baseline for the GA)."""
    rng = np.random.default_rng([seed, 0x5EED])
    genomes = [PipelineGenome.random(rng) for _ in range(n)]
    scores = _evaluate_many(genomes, X, y, task, folds, seed, 1)
    i = int(np.argmax(scores))
    log = [{"evaluation": j, "generation": 0, "genes": list(g.canonical()), "score": s}
           for j, (g, s) in enumerate(zip(genomes, scores))]
    return SearchResult(genomes[i], float(scores[i]), log, [], n)


# ---------------------------------------------------------------------------
# model artifacts
# ---------------------------------------------------------------------------


def model_artifact(genome: PipelineGenome, task: str, seed: int, X, y, trial_ids=None) -> dict:
    """Self-contained description from which :func:`load_model` refits exactly."""
    y = np.asarray(y)
    return {
        "format": MODEL_FORMAT,
        "task": task,
        "seed": seed,
        "genome": genome.describe(task),
        "n_features": int(np.asarray(X).shape[1]),
        "X": np.asarray(X, dtype=float).tolist(),
        "y": [str(v) for v in y] if task == CLASSIFICATION else [float(v) for v in y],
        "trial_ids": list(trial_ids) if trial_ids is not None else None,
    }


def load_model(doc: dict) -> FittedPipeline:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a model artifact: {doc.get('format')!r}")
    genome = PipelineGenome(*doc["genome"]["genes"])
    return fit_pipeline(genome, np.array(doc["X"], dtype=float), np.array(doc["y"]),
                        doc["task"], doc["seed"])


def dumps_model(doc: dict) -> str:
    return json.dumps(doc)
