"""Multi-task datasets: construction, random task generation, CSV I/O.

A multi-task dataset is a set of N input points in R^d together with an
N x T label matrix; column t holds the labels of task t.  Univariate
datasets (d = 1) are stored sorted by x with duplicate x values rejected,
since interpolation constraints at a repeated abscissa would conflict.

Random task columns are generated with per-column RNG streams: column j
of a generation request uses ``numpy.random.default_rng([seed, j])``, so
the labels of task j never depend on how many other tasks were requested.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MultiTaskDataset",
    "TaskGenSpec",
    "make_two_squares",
    "make_univariate_demo",
    "augment_with_random_tasks",
    "make_student_teacher",
    "load_csv",
    "save_csv",
]


class DatasetError(ValueError):
    """Raised for malformed datasets or dataset files."""


@dataclass(frozen=True)
class MultiTaskDataset:
    """N input points in R^d with an N x T label matrix.

    Instances are immutable: the arrays are copied on construction and
    marked read-only, so datasets are safe to share across threads.
    Univariate inputs are canonically sorted; labels are reordered
    consistently.
    """

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.array(self.inputs, dtype=float)
        y = np.array(self.labels, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.ndim != 2 or y.ndim != 2:
            raise DatasetError(f"inputs/labels must be 2-D, got {x.shape}, {y.shape}")
        if x.shape[0] != y.shape[0]:
            raise DatasetError(f"row mismatch: {x.shape[0]} inputs vs {y.shape[0]} label rows")
        if x.shape[0] < 1 or x.shape[1] < 1 or y.shape[1] < 1:
            raise DatasetError("dataset needs at least one point, one input dim and one task")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise DatasetError("non-finite values in dataset")
        if x.shape[1] == 1 and x.shape[0] > 1:
            order = np.argsort(x[:, 0], kind="stable")
            x = x[order]
            y = y[order]
            if np.any(np.diff(x[:, 0]) == 0.0):
                raise DatasetError("duplicate univariate x values (interpolation ill-posed)")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_points(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_tasks(self) -> int:
        return self.labels.shape[1]

    @property
    def is_univariate(self) -> bool:
        return self.input_dim == 1

    @property
    def x(self) -> np.ndarray:
        """The sorted abscissae of a univariate dataset, shape (N,)."""
        if not self.is_univariate:
            raise DatasetError("x is only defined for univariate datasets")
        return self.inputs[:, 0]

    def task_column(self, t: int) -> np.ndarray:
        return self.labels[:, t]

    def with_labels(self, labels: np.ndarray) -> "MultiTaskDataset":
        return MultiTaskDataset(self.inputs, labels)


@dataclass(frozen=True)
class TaskGenSpec:
    """Recipe for generating random task columns.

    kind:
        ``bernoulli`` -- labels in {0, 1}, equiprobable;
        ``gaussian`` -- standard normal labels;
        ``permutation-augment`` -- uniformly random permutation of the
        existing task columns (makes the columns exchangeable by
        construction; ``count`` is not used);
        ``student-teacher`` -- labels from ``count`` random unit-norm
        ReLU teacher neurons on fresh Gaussian inputs.
    seed fully determines the output.  Appended column j depends only on
    (seed, j), never on ``count``.
    """

    kind: str
    count: int = 1
    seed: int = 0
    input_dim: int = 5
    n_points: int = 20

    KINDS = ("bernoulli", "gaussian", "permutation-augment", "student-teacher")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DatasetError(f"unknown task kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind != "permutation-augment" and self.count < 1:
            raise DatasetError(f"count must be >= 1, got {self.count}")


def _column_rng(seed: int, j: int) -> np.random.Generator:
    # stream j of seed; independent of how many columns are drawn
    return np.random.default_rng([seed, j])


def make_two_squares() -> MultiTaskDataset:
    """The 8-point planar dataset on two concentric axis-aligned squares.

    Outer square of side 2 centered at the origin with label 0 at each
    vertex; inner square of side 1 with label 1 at each vertex.
    """
    outer = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
    inner = [(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)]
    inputs = np.array(outer + inner)
    labels = np.array([0.0] * 4 + [1.0] * 4)[:, None]
    return MultiTaskDataset(inputs, labels)


def make_univariate_demo() -> MultiTaskDataset:
    """The canonical 5-point concave profile used by the univariate experiments.

    x = (-2, -1, 0, 1, 2), y = (0, 2, 3, 2, 0).  The consecutive slope
    changes share a sign, so fitting this task alone admits infinitely
    many minimizers; adding a generic second task makes the
    straight-line interpolant the unique optimum.
    """
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    y = np.array([0.0, 2.0, 3.0, 2.0, 0.0])
    return MultiTaskDataset(x, y)


def augment_with_random_tasks(base: MultiTaskDataset, spec: TaskGenSpec) -> MultiTaskDataset:
    """Append ``spec.count`` random task columns (or permute the existing ones).

    For kind ``bernoulli``/``gaussian``, returns a dataset with
    T' = T + count; appended column j is drawn from the RNG stream
    (seed, j).  For kind ``permutation-augment``, the existing columns
    are permuted uniformly at random and no columns are added.
    """
    n = base.n_points
    if spec.kind == "permutation-augment":
        perm = _column_rng(spec.seed, 0).permutation(base.n_tasks)
        return base.with_labels(base.labels[:, perm])
    if spec.kind == "student-teacher":
        raise DatasetError("student-teacher generates a fresh dataset; use make_student_teacher")
    cols = np.empty((n, spec.count))
    for j in range(spec.count):
        rng = _column_rng(spec.seed, j)
        if spec.kind == "bernoulli":
            cols[:, j] = rng.integers(0, 2, size=n).astype(float)
        else:
            cols[:, j] = rng.standard_normal(n)
    return base.with_labels(np.hstack([base.labels, cols]))


def make_student_teacher(spec: TaskGenSpec) -> tuple[MultiTaskDataset, np.ndarray]:
    """Draw a random-neuron teacher dataset.

    ``spec.count`` unit-norm teacher weights w_t in R^d are drawn, along
    with ``spec.n_points`` standard-Gaussian inputs; task t's label of
    point i is the ReLU response (w_t . x_i)_+.  Returns the dataset and
    the count x d matrix of teacher weights.  Input draws use stream
    (seed, 0) and teacher t uses stream (seed, 1 + t), so teacher t is
    independent of ``count``.
    """
    if spec.kind != "student-teacher":
        raise DatasetError(f"expected kind 'student-teacher', got {spec.kind!r}")
    d, n, t_count = spec.input_dim, spec.n_points, spec.count
    inputs = _column_rng(spec.seed, 0).standard_normal((n, d))
    teachers = np.empty((t_count, d))
    for t in range(t_count):
        w = _column_rng(spec.seed, 1 + t).standard_normal(d)
        teachers[t] = w / np.linalg.norm(w)
    labels = np.maximum(inputs @ teachers.T, 0.0)
    return MultiTaskDataset(inputs, labels), teachers


def _header(d: int, t: int) -> list[str]:
    return [f"x{i + 1}" for i in range(d)] + [f"y{j + 1}" for j in range(t)]


def save_csv(data: MultiTaskDataset, path) -> None:
    """Write a dataset as CSV with header x1..xd,y1..yT, one row per point.

    Floats are written with shortest round-trip formatting, so
    save -> load reproduces the exact bit patterns.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_header(data.input_dim, data.n_tasks))
        for i in range(data.n_points):
            row = [repr(float(v)) for v in data.inputs[i]] + [
                repr(float(v)) for v in data.labels[i]
            ]
            writer.writerow(row)


def load_csv(path) -> MultiTaskDataset:
    """Read a dataset written by :func:`save_csv`.

    Rejects malformed headers, missing label columns, duplicate
    univariate x values and datasets with fewer than two points.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    d = sum(1 for h in header if h.startswith("x"))
    t = len(header) - d
    if d < 1 or t < 1 or header != _header(d, t):
        raise DatasetError(f"{path}: header must be x1..xd,y1..yT, got {header}")
    if len(rows) < 2:
        raise DatasetError(f"{path}: need at least 2 data rows, got {len(rows)}")
    try:
        values = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise DatasetError(f"{path}: parse failure: {exc}") from None
    if values.shape[1] != d + t:
        raise DatasetError(f"{path}: row width {values.shape[1]} does not match header")
    return MultiTaskDataset(values[:, :d], values[:, d:])
