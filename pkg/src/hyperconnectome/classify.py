"""Linear SVM (Pegasos-style hinge subgradient descent) and the repeated
stratified train/test protocol used to score embeddings."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError, ProtocolError, ShapeError, TrainingError

DEFAULT_REG = 1e-3
DEFAULT_SVM_EPOCHS = 200
DEFAULT_RUNS = 100
DEFAULT_TRAIN_FRAC = 0.8


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    reg: float
    mean: np.ndarray
    scale: np.ndarray
    objective_trace: List[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]


def _standardize_fit(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    # constant columns carry no information; leave them at zero
    sd = np.where(sd > 1e-12, sd, 1.0)
    return mean, sd


def hinge_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, reg: float) -> float:
    margins = 1.0 - y * (x @ w + b)
    return 0.5 * reg * (float(w @ w) + b * b) + float(np.mean(np.maximum(margins, 0.0)))


def svm_train(
    features,
    labels,
    reg: float = DEFAULT_REG,
    epochs: int = DEFAULT_SVM_EPOCHS,
    seed: int = 0,
) -> SvmModel:
    """Minimize ``reg/2 |(w, b)|^2 + mean hinge`` by stochastic subgradient
    steps of size ``1 / (reg * t)``.

    The bias is handled as the weight of a constant feature. Features are
    standardized per column and the standardization is kept in the model.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"features {x.shape} and labels {y.shape} do not match")
    if reg <= 0:
        raise ParameterError(f"reg must be positive, got {reg}")
    if epochs < 1:
        raise ParameterError(f"epochs must be >= 1, got {epochs}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TrainingError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise TrainingError("training data contains a single class")
    if not np.all(np.isfinite(x)):
        raise TrainingError("non-finite feature values")

    mean, sd = _standardize_fit(x)
    xs = (x - mean) / sd
    n, d = xs.shape
    xa = np.hstack([xs, np.ones((n, 1))])
    w = np.zeros(d + 1)
    rng = np.random.default_rng(seed)
    t = 0
    trace = []
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (reg * t)
            violated = y[i] * (xa[i] @ w) < 1.0
            w *= 1.0 - eta * reg
            if violated:
                w += eta * y[i] * xa[i]
        trace.append(hinge_objective(w[:d], w[d], xs, y, reg))
    return SvmModel(w[:d].copy(), float(w[d]), reg, mean, sd, trace)


def svm_decision(model: SvmModel, features) -> np.ndarray:
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got {x.shape[1]}")
    return ((x - model.mean) / model.scale) @ model.weights + model.bias


def svm_predict(model: SvmModel, features) -> np.ndarray:
    """Labels in {-1, +1}; a zero score is assigned +1."""
    return np.where(svm_decision(model, features) >= 0.0, 1, -1)


# --------------------------------------------------------------------------
# protocol
# --------------------------------------------------------------------------


def run_seed(seed: int, run: int) -> int:
    """Split seed for run ``run`` derived from the top-level seed."""
    return int(np.random.SeedSequence([int(seed), int(run)]).generate_state(1)[0])


def stratified_split(
    y: np.ndarray, train_frac: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted train and test indices; each class keeps at least one subject
    on each side."""
    train, test = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        n_test = int(round(len(idx) * (1.0 - train_frac)))
        n_test = min(max(n_test, 1), len(idx) - 1)
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.sort(np.array(train)), np.sort(np.array(test))


@dataclass
class EvalReport:
    accuracies: List[float]
    train_accuracies: List[float]
    class_names: Tuple[str, str]
    subject_ids: List[str]
    recon_errors: List[float]
    config: Dict[str, object] = field(default_factory=dict)

    @property
    def n_runs(self) -> int:
        return len(self.accuracies)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def mean_recon_error(self) -> float:
        vals = np.asarray(self.recon_errors, dtype=np.float64)
        vals = vals[np.isfinite(vals)]
        return float(vals.mean()) if vals.size else float("nan")

    def to_text(self) -> str:
        lines = []
        for r, (acc, tr) in enumerate(zip(self.accuracies, self.train_accuracies)):
            lines += [f"[run {r}]", f"test_accuracy = {acc!r}", f"train_accuracy = {tr!r}", ""]
        lines += [
            "[summary]",
            f"n_runs = {self.n_runs}",
            f"mean_accuracy = {self.mean_accuracy!r}",
            f"std_accuracy = {self.std_accuracy!r}",
            f"mean_recon_error = {self.mean_recon_error!r}",
            f"classes = {self.class_names[0]},{self.class_names[1]}",
        ]
        for key in sorted(self.config):
            lines.append(f"config.{key} = {self.config[key]}")
        lines.append("")
        lines.append("[recon_error]")
        for sid, err in zip(self.subject_ids, self.recon_errors):
            lines.append(f"{sid} = {err!r}")
        return "\n".join(lines) + "\n"

    def runs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "test_accuracy", "train_accuracy"])
        for r, (acc, tr) in enumerate(zip(self.accuracies, self.train_accuracies)):
            w.writerow([r, repr(acc), repr(tr)])
        return buf.getvalue()


def _as_feature_matrix(embeddings) -> Tuple[np.ndarray, List[str], List[float]]:
    rows, ids, errs = [], [], []
    for i, e in enumerate(embeddings):
        if hasattr(e, "flattened"):
            rows.append(e.flattened)
            ids.append(e.subject_id)
            errs.append(float(getattr(e, "recon_error", float("nan"))))
        else:
            rows.append(np.asarray(e, dtype=np.float64).reshape(-1))
            ids.append(str(i))
            errs.append(float("nan"))
    widths = {r.shape[0] for r in rows}
    if len(widths) != 1:
        raise ShapeError(f"embeddings have different sizes {sorted(widths)}")
    return np.vstack(rows), ids, errs


def evaluate_protocol(
    embeddings: Sequence,
    labels: Sequence,
    n_runs: int = DEFAULT_RUNS,
    train_frac: float = DEFAULT_TRAIN_FRAC,
    seed: int = 0,
    reg: float = DEFAULT_REG,
    svm_epochs: int = DEFAULT_SVM_EPOCHS,
    workers: Optional[int] = None,
    config: Optional[Dict[str, object]] = None,
) -> EvalReport:
    """Repeated stratified splits; one linear SVM per run on flattened
    embeddings, scored on the held-out part."""
    if n_runs < 1:
        raise ProtocolError(f"n_runs must be >= 1, got {n_runs}")
    if not 0.0 < train_frac < 1.0:
        raise ProtocolError(f"train_frac must lie in (0, 1), got {train_frac}")
    x, ids, errs = _as_feature_matrix(embeddings)
    labels = list(labels)
    if len(labels) != x.shape[0]:
        raise ProtocolError(f"{len(labels)} labels for {x.shape[0]} embeddings")
    classes = sorted(set(labels), key=str)
    if len(classes) != 2:
        raise ProtocolError(f"exactly two classes are supported, got {classes}")
    y = np.array([-1 if lab == classes[0] else 1 for lab in labels])
    for cls, sign in zip(classes, (-1, 1)):
        if np.sum(y == sign) < 2:
            raise ProtocolError(f"class {cls!r} has fewer than 2 subjects")

    def one_run(r: int) -> Tuple[float, float]:
        s = run_seed(seed, r)
        train, test = stratified_split(y, train_frac, np.random.default_rng(s))
        model = svm_train(x[train], y[train], reg=reg, epochs=svm_epochs, seed=s)
        test_acc = float(np.mean(svm_predict(model, x[test]) == y[test]))
        train_acc = float(np.mean(svm_predict(model, x[train]) == y[train]))
        return test_acc, train_acc

    if workers is None or workers <= 1:
        results = [one_run(r) for r in range(n_runs)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_run, range(n_runs)))

    cfg = {"n_runs": n_runs, "train_frac": train_frac, "seed": seed, "svm_reg": reg, "svm_epochs": svm_epochs}
    cfg.update(config or {})
    return EvalReport(
        accuracies=[a for a, _ in results],
        train_accuracies=[t for _, t in results],
        class_names=(str(classes[0]), str(classes[1])),
        subject_ids=ids,
        recon_errors=errs,
        config=cfg,
    )
