"""Classification tasks, subject-grouped stratified folds, and cell runs.

A "cell" is one (task, model, normalization, occlusion) configuration run
through the ten-fold protocol: eight partitions train, one validates (the
validation accuracy is recorded but never used for selection), one tests.
Fold plans depend only on (dataset, task, root seed), so all models of a
task share folds. Per-fold training seeds are derived from the root seed by
a counter-hash scheme (see :mod:`gaitxai.seeds`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lrp
from .data import Dataset, GrfTrial, assemble_matrix, minmax_normalize, occlude_values
from .models import (ModelParams, TrainSchedule, cnn_arch, init_params, mlp_arch,
                     one_hot, paper_schedule, predict_matrix, sgd_train)
from .seeds import derive_seed
from .svm import svm_train_model

NORMALIZATIONS = ("none", "minmax")
HARNESS_MODEL_KINDS = ("svm", "mlp", "cnn", "zrb")


@dataclass(frozen=True)
class Task:
    id: str
    classes: tuple[str, ...]
    mapping: dict[str, str]  # raw label -> task class

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_index(self, raw_label: str) -> int:
        return self.classes.index(self.mapping[raw_label])


def _binary(name: str, disorder: str) -> Task:
    return Task(id=name, classes=("HC", disorder),
                mapping={"HC": "HC", disorder: disorder})


TASKS: dict[str, Task] = {
    "HC_GD": Task(id="HC_GD", classes=("HC", "GD"),
                  mapping={"HC": "HC", "H": "GD", "K": "GD", "A": "GD"}),
    "HC_H": _binary("HC_H", "H"),
    "HC_K": _binary("HC_K", "K"),
    "HC_A": _binary("HC_A", "A"),
    "H_K_A": Task(id="H_K_A", classes=("H", "K", "A"),
                  mapping={"H": "H", "K": "K", "A": "A"}),
    "HC_H_K_A": Task(id="HC_H_K_A", classes=("HC", "H", "K", "A"),
                     mapping={"HC": "HC", "H": "H", "K": "K", "A": "A"}),
}


def resolve_task(name: str) -> Task:
    key = name.replace("/", "_").upper()
    if key not in TASKS:
        raise ValueError(f"unknown task {name!r}; options: {sorted(TASKS)}")
    return TASKS[key]


def task_trials(dataset: Dataset, task: Task) -> list[GrfTrial]:
    return [t for t in dataset.trials if t.class_label in task.mapping]


@dataclass(frozen=True)
class FoldPlan:
    task_id: str
    partitions: tuple[tuple[str, ...], ...]

    @property
    def k(self) -> int:
        return len(self.partitions)

    def roles(self, fold: int) -> tuple[tuple[int, ...], int, int]:
        """Partition roles for a fold: (train partition indices, val, test)."""
        test = fold
        val = (fold + 1) % self.k
        train = tuple(i for i in range(self.k) if i not in (test, val))
        return train, val, test


def stratified_group_kfold(dataset: Dataset, task: Task, k: int = 10,
                           rng: np.random.Generator | None = None) -> FoldPlan:
    """Partition subjects into k groups, stratified by task class.

    All trials of a subject share its partition. Within each class the
    partition sizes differ by at most one subject.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    by_class: dict[str, list[str]] = {cls: [] for cls in task.classes}
    seen: set[str] = set()
    for trial in task_trials(dataset, task):
        if trial.subject_id not in seen:
            seen.add(trial.subject_id)
            by_class[task.mapping[trial.class_label]].append(trial.subject_id)
    for cls in task.classes:
        if len(by_class[cls]) < k:
            raise ValueError(
                f"task {task.id}: class {cls} has {len(by_class[cls])} subjects, "
                f"fewer than k={k}"
            )
    parts: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    for cls in task.classes:
        subjects = sorted(by_class[cls])
        order = rng.permutation(len(subjects))
        for j, pos in enumerate(order):
            parts[(j + offset) % k].append(subjects[pos])
        offset = (offset + len(subjects)) % k
    return FoldPlan(task_id=task.id,
                    partitions=tuple(tuple(sorted(p)) for p in parts))


def zero_rule_baseline(task: Task, dataset: Dataset) -> float:
    """Majority-class trial fraction, in percent, at trial granularity."""
    trials = task_trials(dataset, task)
    if not trials:
        raise ValueError(f"no trials for task {task.id}")
    counts = np.zeros(task.n_classes, dtype=int)
    for trial in trials:
        counts[task.class_index(trial.class_label)] += 1
    return 100.0 * counts.max() / counts.sum()


@dataclass(frozen=True)
class FoldAudit:
    train_subjects: tuple[str, ...]
    val_subjects: tuple[str, ...]
    test_subjects: tuple[str, ...]
    train_keys: tuple[tuple[str, str], ...]
    test_keys: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    model_kind: str
    normalization: str
    occlusion: bool
    per_fold_acc: tuple[float, ...]
    per_fold_val_acc: tuple[float, ...]
    per_fold_counts: tuple[tuple[int, int], ...]  # (correct, total) per fold
    zrb: float
    root_seed: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_fold_acc))

    @property
    def sd(self) -> float:
        return float(np.std(self.per_fold_acc, ddof=1))

    @property
    def pooled_accuracy(self) -> float:
        correct = sum(c for c, _ in self.per_fold_counts)
        total = sum(n for _, n in self.per_fold_counts)
        return 100.0 * correct / total

    def to_record(self) -> dict:
        return {
            "task": self.task_id,
            "model": self.model_kind,
            "normalization": self.normalization,
            "occlusion": self.occlusion,
            "per_fold_acc": list(self.per_fold_acc),
            "per_fold_val_acc": list(self.per_fold_val_acc),
            "mean": self.mean,
            "sd": self.sd,
            "zrb": self.zrb,
            "seeds": {
                "root": self.root_seed,
                "scheme": "sha256(root|label-path), see gaitxai.seeds",
            },
        }


@dataclass(frozen=True)
class TaskOutput:
    result: TaskResult
    fold_plan: FoldPlan
    summaries: dict[int, lrp.ClassRelevanceSummary] | None
    audits: tuple[FoldAudit, ...]


def _train_fold(model_kind: str, X: np.ndarray, y: np.ndarray, n_classes: int,
                schedule: TrainSchedule, root_seed: int,
                labels: tuple) -> ModelParams | int:
    if model_kind == "svm":
        return svm_train_model(X, y, n_classes,
                               seed=derive_seed(root_seed, *labels, "svm"))
    if model_kind in ("mlp", "cnn"):
        arch = mlp_arch(n_classes) if model_kind == "mlp" else cnn_arch(n_classes)
        init_rng = np.random.default_rng(derive_seed(root_seed, *labels, "init"))
        params = init_params(arch, init_rng, model_kind, n_classes)
        batch_rng = np.random.default_rng(derive_seed(root_seed, *labels, "batch"))
        return sgd_train(params, X, one_hot(y, n_classes), schedule, batch_rng)
    if model_kind == "zrb":
        # constant majority predictor; ties break to the lowest class index
        return int(np.argmax(np.bincount(y, minlength=n_classes)))
    raise ValueError(f"unknown model kind {model_kind!r}")


def _predict(model, X: np.ndarray) -> np.ndarray:
    if isinstance(model, int):
        return np.full(len(X), model, dtype=int)
    return predict_matrix(model, X)


def run_task(dataset: Dataset, task: Task, model_kind: str, *,
             normalization: str = "minmax", occlusion: bool = False,
             schedule: TrainSchedule | None = None, root_seed: int = 0,
             k: int = 10, collect_relevance: bool = True,
             epsilon: float = lrp.DEFAULT_EPSILON, jobs: int = 1) -> TaskOutput:
    """Run one cell through the grouped ten-fold protocol.

    Min-max extrema are computed over all trials of the provided dataset
    (before task filtering), matching the global normalization convention.
    Occlusion zeroes the horizontal input positions of both the training and
    the test inputs and retrains from scratch with its own derived seeds.
    Test trials are explained toward their ground-truth class and aggregated
    into per-class summaries. ``jobs`` > 1 trains folds in parallel threads;
    results are identical to the sequential order (per-fold derived seeds).
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if model_kind not in HARNESS_MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    schedule = schedule or paper_schedule()

    if normalization == "minmax":
        ds = dataset if dataset.normalization_state == "minmax" else minmax_normalize(dataset)
    else:
        ds = dataset

    trials = task_trials(ds, task)
    if not trials:
        raise ValueError(f"no trials for task {task.id}")
    zrb = zero_rule_baseline(task, ds)

    fold_rng = np.random.default_rng(derive_seed(root_seed, "folds", task.id))
    plan = stratified_group_kfold(ds, task, k=k, rng=fold_rng)

    X = assemble_matrix(trials)
    if occlusion:
        X = occlude_values(X)
    y = np.array([task.class_index(t.class_label) for t in trials], dtype=int)
    subjects = np.array([t.subject_id for t in trials])
    keys = [t.key for t in trials]

    part_of = {}
    for pi, part in enumerate(plan.partitions):
        for sid in part:
            part_of[sid] = pi

    trial_parts = np.array([part_of[s] for s in subjects])

    def run_fold(fold: int):
        train_parts, val_part, test_part = plan.roles(fold)
        train_rows = np.flatnonzero(np.isin(trial_parts, train_parts))
        val_rows = np.flatnonzero(trial_parts == val_part)
        test_rows = np.flatnonzero(trial_parts == test_part)
        train_subjects = set(subjects[train_rows])
        test_subjects = set(subjects[test_rows])
        if train_subjects & test_subjects:
            raise AssertionError("subject leaked between train and test partitions")

        labels = ("cell", task.id, model_kind, normalization,
                  "occluded" if occlusion else "baseline", fold)
        model = _train_fold(model_kind, X[train_rows], y[train_rows],
                            task.n_classes, schedule, root_seed, labels)

        val_pred = _predict(model, X[val_rows])
        val_acc = 100.0 * float(np.mean(val_pred == y[val_rows]))
        test_pred = _predict(model, X[test_rows])
        correct = int(np.sum(test_pred == y[test_rows]))

        audit = FoldAudit(
            train_subjects=tuple(sorted(train_subjects)),
            val_subjects=tuple(sorted(set(subjects[val_rows]))),
            test_subjects=tuple(sorted(test_subjects)),
            train_keys=tuple(keys[r] for r in train_rows),
            test_keys=tuple(keys[r] for r in test_rows),
        )

        fold_maps: list[tuple[int, lrp.RelevanceMap, np.ndarray]] = []
        if collect_relevance and not isinstance(model, int):
            for row in test_rows:
                target = int(y[row])
                rmap = lrp.explain_trial(model, X[row], target, eps=epsilon)
                fold_maps.append((target, rmap, X[row]))
        return val_acc, correct, len(test_rows), audit, fold_maps

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fold_outputs = list(pool.map(run_fold, range(plan.k)))
    else:
        fold_outputs = [run_fold(f) for f in range(plan.k)]

    fold_accs: list[float] = []
    val_accs: list[float] = []
    counts: list[tuple[int, int]] = []
    audits: list[FoldAudit] = []
    rel_maps: dict[int, list[lrp.RelevanceMap]] = {c: [] for c in range(task.n_classes)}
    rel_signals: dict[int, list[np.ndarray]] = {c: [] for c in range(task.n_classes)}
    for val_acc, correct, n_test, audit, fold_maps in fold_outputs:
        val_accs.append(val_acc)
        counts.append((correct, n_test))
        fold_accs.append(100.0 * correct / n_test)
        audits.append(audit)
        for target, rmap, signal in fold_maps:
            rel_maps[target].append(rmap)
            rel_signals[target].append(signal)

    summaries = None
    if collect_relevance and model_kind != "zrb":
        summaries = {
            c: lrp.class_average(rel_maps[c], rel_signals[c])
            for c in range(task.n_classes)
            if rel_maps[c]
        }

    result = TaskResult(
        task_id=task.id,
        model_kind=model_kind,
        normalization=normalization,
        occlusion=occlusion,
        per_fold_acc=tuple(fold_accs),
        per_fold_val_acc=tuple(val_accs),
        per_fold_counts=tuple(counts),
        zrb=zrb,
        root_seed=root_seed,
    )
    return TaskOutput(result=result, fold_plan=plan, summaries=summaries,
                      audits=tuple(audits))


def occlusion_delta(result_occluded: TaskResult, result_baseline: TaskResult) -> float:
    """Occluded minus baseline mean accuracy, in percentage points."""
    same = (result_occluded.task_id == result_baseline.task_id
            and result_occluded.model_kind == result_baseline.model_kind
            and result_occluded.normalization == result_baseline.normalization)
    if not same:
        raise ValueError(
            "occlusion delta requires matching task/model/normalization, got "
            f"{result_occluded.task_id}/{result_occluded.model_kind}/"
            f"{result_occluded.normalization} vs {result_baseline.task_id}/"
            f"{result_baseline.model_kind}/{result_baseline.normalization}"
        )
    if not result_occluded.occlusion or result_baseline.occlusion:
        raise ValueError("pass (occluded, baseline) results in that order")
    return result_occluded.mean - result_baseline.mean
