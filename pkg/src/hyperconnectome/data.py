"""Multi-view connectivity data: containers, text I/O and a synthetic cohort
generator with class-specific block-community structure."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import CohortError, LoadError, ParameterError, ValidationError

# Matrices whose asymmetry stays below this are treated as textual round-off.
SYMMETRY_TOL = 1e-9
MATRIX_FMT = "%.17g"


@dataclass(frozen=True)
class ConnectivityMatrix:
    values: np.ndarray
    view_id: int = 1

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError(f"connectivity matrix must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("connectivity matrix contains NaN or Inf")
        if not np.array_equal(v, v.T):
            raise ValidationError("connectivity matrix is not symmetric")
        if np.any(np.diag(v) != 0):
            raise ValidationError("connectivity matrix has a nonzero diagonal")
        if self.view_id < 1:
            raise ValidationError(f"view_id must be >= 1, got {self.view_id}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MultiViewConnectome:
    subject_id: str
    views: Tuple[ConnectivityMatrix, ...]
    label: Optional[str] = None

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise ValidationError(f"subject {self.subject_id}: needs at least one view")
        n = views[0].n_nodes
        for m, view in enumerate(views, start=1):
            if view.n_nodes != n:
                raise ValidationError(
                    f"subject {self.subject_id}, view {m}: {view.n_nodes} nodes, expected {n}"
                )
        object.__setattr__(self, "views", views)

    @property
    def n_nodes(self) -> int:
        return self.views[0].n_nodes

    @property
    def n_views(self) -> int:
        return len(self.views)

    def select_views(self, indices: Sequence[int]) -> "MultiViewConnectome":
        """Subject restricted to the given 0-based view indices (renumbered)."""
        picked = tuple(
            ConnectivityMatrix(self.views[i].values, view_id=j + 1) for j, i in enumerate(indices)
        )
        return MultiViewConnectome(self.subject_id, picked, self.label)


@dataclass(frozen=True)
class Cohort:
    subjects: Tuple[MultiViewConnectome, ...]
    class_names: Tuple[str, ...] = ()

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise CohortError("no subjects")
        n, m = subjects[0].n_nodes, subjects[0].n_views
        seen = set()
        for s in subjects:
            if s.n_nodes != n:
                raise CohortError(f"subject {s.subject_id} has N={s.n_nodes}, cohort has N={n}")
            if s.n_views != m:
                raise CohortError(f"subject {s.subject_id} has M={s.n_views}, cohort has M={m}")
            if s.subject_id in seen:
                raise CohortError(f"duplicate subject_id {s.subject_id!r}")
            seen.add(s.subject_id)
        names = tuple(self.class_names)
        if not names:
            names = tuple(sorted({s.label for s in subjects if s.label is not None}))
        for s in subjects:
            if s.label is not None and s.label not in names:
                raise CohortError(f"subject {s.subject_id} label {s.label!r} not in class_names")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "class_names", names)

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def n_nodes(self) -> int:
        return self.subjects[0].n_nodes

    @property
    def n_views(self) -> int:
        return self.subjects[0].n_views

    @property
    def labels(self) -> List[Optional[str]]:
        return [s.label for s in self.subjects]

    def select_views(self, indices: Sequence[int]) -> "Cohort":
        return Cohort(tuple(s.select_views(indices) for s in self.subjects), self.class_names)


def symmetrize(values, view_id: int = 1) -> ConnectivityMatrix:
    """Return ``(A + A^T) / 2`` with the diagonal set to zero."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"cannot symmetrize non-square matrix of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix contains NaN or Inf")
    s = 0.5 * (a + a.T)
    np.fill_diagonal(s, 0.0)
    return ConnectivityMatrix(s, view_id=view_id)


# --------------------------------------------------------------------------
# text I/O
# --------------------------------------------------------------------------


def read_matrix(path) -> np.ndarray:
    """Read a whitespace-separated numeric grid, one row per line."""
    path = Path(path)
    if not path.is_file():
        raise LoadError(f"matrix file not found: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as exc:
                raise LoadError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise LoadError(f"matrix file is empty: {path}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{path}: ragged rows (lengths {sorted(widths)})")
    return np.array(rows, dtype=np.float64)


def write_matrix(path, values) -> None:
    a = np.atleast_2d(np.asarray(values, dtype=np.float64))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for row in a:
            fh.write(" ".join(MATRIX_FMT % x for x in row))
            fh.write("\n")


def _checked_view(raw: np.ndarray, subject_id: str, view_id: int, path) -> ConnectivityMatrix:
    where = f"subject {subject_id}, view {view_id} ({path})"
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ValidationError(f"{where}: matrix is not square, shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValidationError(f"{where}: NaN or Inf entry")
    asym = float(np.max(np.abs(raw - raw.T)))
    if asym > SYMMETRY_TOL:
        raise ValidationError(f"{where}: asymmetric matrix (max |A - A^T| = {asym:.3g})")
    return symmetrize(raw, view_id=view_id)


def load_cohort(dir_path, manifest) -> Cohort:
    """Load a cohort from a manifest with header
    ``subject_id,label,view_1,...,view_M``.

    Relative matrix paths are resolved against the manifest's directory;
    ``dir_path`` is used when the manifest path itself is relative.
    """
    manifest = Path(manifest)
    if not manifest.is_absolute() and dir_path is not None:
        manifest = Path(dir_path) / manifest
    if not manifest.is_file():
        raise LoadError(f"manifest not found: {manifest}")
    base = manifest.parent

    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if any(cell.strip() for cell in r)]
    if header is None:
        raise CohortError("no subjects")
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0] != "subject_id" or header[1] != "label":
        raise CohortError(f"{manifest}: header must be subject_id,label,view_1,...; got {header}")
    n_views = len(header) - 2
    if not rows:
        raise CohortError("no subjects")

    subjects = []
    for row in rows:
        row = [c.strip() for c in row]
        if len(row) != len(header):
            raise CohortError(f"{manifest}: row {row} has {len(row)} fields, expected {len(header)}")
        sid, label = row[0], row[1] or None
        views = []
        for m in range(n_views):
            path = Path(row[2 + m])
            if not path.is_absolute():
                path = base / path
            views.append(_checked_view(read_matrix(path), sid, m + 1, path))
        try:
            subjects.append(MultiViewConnectome(sid, tuple(views), label))
        except ValidationError as exc:
            raise CohortError(str(exc)) from None
    return Cohort(tuple(subjects))


def write_cohort(cohort: Cohort, dir_path, manifest_name: str = "manifest.csv") -> Path:
    """Write every view as a matrix file plus a manifest; returns the manifest path."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    header = ["subject_id", "label"] + [f"view_{m}" for m in range(1, cohort.n_views + 1)]
    manifest = root / manifest_name
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for s in cohort.subjects:
            files = []
            for view in s.views:
                rel = os.path.join("matrices", f"{s.subject_id}_view{view.view_id}.txt")
                write_matrix(root / rel, view.values)
                files.append(rel)
            writer.writerow([s.subject_id, s.label or ""] + files)
    return manifest


# --------------------------------------------------------------------------
# synthetic cohorts
# --------------------------------------------------------------------------

WITHIN_RANGE = (0.6, 1.0)
BETWEEN_RANGE = (0.0, 0.3)


def _block_template(assign: np.ndarray, within: np.ndarray, between: float) -> np.ndarray:
    same = assign[:, None] == assign[None, :]
    t = np.where(same, within[assign][:, None], between)
    np.fill_diagonal(t, 0.0)
    return t


def generate_synthetic_cohort(
    n_subjects: int,
    n_nodes: int,
    n_views: int,
    n_classes: int,
    signal: float,
    seed: int,
    noise_scale: float = 1.0,
    n_blocks: Optional[int] = None,
) -> Cohort:
    """Labeled cohort of noisy block-community connectomes.

    Each view has a community layout. Nodes are split into ``n_views``
    disjoint groups and view ``m`` only moves the nodes of group ``m`` to
    class-specific communities, so the class information is spread over all
    views. A subject is its class template plus symmetric Gaussian noise with
    standard deviation ``(1 - signal) * noise_scale``.
    """
    for name, val in (("n_subjects", n_subjects), ("n_nodes", n_nodes),
                      ("n_views", n_views), ("n_classes", n_classes)):
        if int(val) != val or val < 1:
            raise ParameterError(f"{name} must be a positive integer, got {val!r}")
    if n_subjects < 2 * n_classes:
        raise ParameterError(f"n_subjects={n_subjects} must be >= 2*n_classes={2 * n_classes}")
    if n_nodes < 4:
        raise ParameterError(f"n_nodes must be >= 4, got {n_nodes}")
    if not 0.0 < signal <= 1.0:
        raise ParameterError(f"signal must lie in (0, 1], got {signal}")

    rng = np.random.default_rng(seed)
    if n_blocks is None:
        n_blocks = max(2, min(5, n_nodes // 5))
    if n_blocks < 2:
        raise ParameterError(f"n_blocks must be >= 2, got {n_blocks}")
    groups = [np.arange(m, n_nodes, n_views) for m in range(n_views)]
    smallest = n_nodes // n_views
    if smallest == 0 or n_blocks ** smallest < n_classes:
        raise ParameterError(
            f"n_nodes={n_nodes} over n_views={n_views} leaves too few nodes per view "
            f"to separate {n_classes} classes"
        )

    templates = np.empty((n_classes, n_views, n_nodes, n_nodes))
    for m in range(n_views):
        base = rng.integers(0, n_blocks, size=n_nodes)
        within = rng.uniform(*WITHIN_RANGE, size=n_blocks)
        between = rng.uniform(*BETWEEN_RANGE)
        moved = groups[m]
        layouts: List[np.ndarray] = []
        for c in range(n_classes):
            while True:
                assign = base.copy()
                if moved.size:
                    assign[moved] = rng.integers(0, n_blocks, size=moved.size)
                if all(not np.array_equal(assign, other) for other in layouts):
                    break
            layouts.append(assign)
            templates[c, m] = _block_template(assign, within, between)

    class_names = tuple(f"class_{c}" for c in range(n_classes))
    labels = np.arange(n_subjects) % n_classes
    rng.shuffle(labels)
    noise_sd = (1.0 - signal) * noise_scale
    width = len(str(n_subjects - 1))

    subjects = []
    for i in range(n_subjects):
        c = int(labels[i])
        views = []
        for m in range(n_views):
            values = templates[c, m].copy()
            if noise_sd > 0:
                noise = np.triu(rng.normal(0.0, noise_sd, size=(n_nodes, n_nodes)), 1)
                values += noise + noise.T
            views.append(ConnectivityMatrix(values, view_id=m + 1))
        subjects.append(MultiViewConnectome(f"sub{i:0{width}d}", tuple(views), class_names[c]))
    return Cohort(tuple(subjects), class_names)
