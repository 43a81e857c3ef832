"""Univariate multi-output continuous piecewise-linear (CPWL) functions.

A CPWL function with T outputs is stored in canonical form: strictly
increasing knot locations, a T-vector of slope changes mu_k per knot
(never the zero vector), the slope vector left of all knots, and the
value vector at a reference point x0.  Evaluation is

    f(x) = offset + base_slope (x - x0) + sum_k mu_k [(x - q_k)_+ - (x0 - q_k)_+]

so the slope right of knot j is base_slope + sum_{k<=j} mu_k.

The representational cost of a canonical CPWL function is
sum_k ||mu_k||_2 -- the minimal sum of output-weight norms over all
unit-input-weight ReLU networks representing it (the affine part rides
on the free residual term).  Knots and neurons are interchangeable:
knot q_k with change mu_k corresponds to a neuron v_k (x - q_k)_+ with
v_k = mu_k.

The straight-line interpolant of a multi-task dataset (each output
connecting consecutive data points) is always a minimizer of this cost
among interpolants, and it is the unique minimizer unless at some
interior data index the two adjacent slope-change vectors are both
nonzero and point in exactly the same direction.  The knot-removal
arithmetic behind that statement lives in :func:`knot_removal_delta`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataset import MultiTaskDataset
from .network import NetworkError, ShallowReLUNet, canonicalize_univariate

__all__ = [
    "CPWLFunction",
    "AlignmentReport",
    "evaluate",
    "representational_cost",
    "connect_the_dots",
    "knot_removal_delta",
    "remove_extraneous_knots",
    "uniqueness_report",
    "net_to_cpwl",
    "cpwl_to_net",
    "bent_interpolant",
    "insert_free_knot",
    "random_perturbed_interpolant",
    "equality_family_interpolant",
]


class CPWLError(ValueError):
    """Raised for invalid CPWL constructions or operations."""


@dataclass(frozen=True)
class CPWLFunction:
    """Canonical piecewise-linear function R -> R^T.

    knots: strictly increasing, shape (M,).  slope_changes: (M, T), no
    all-zero rows.  base_slope: (T,) slope left of every knot.
    base_offset: (T,) value at x0.  x0 defaults to the first knot, or 0
    for affine functions.
    """

    knots: np.ndarray
    slope_changes: np.ndarray
    base_slope: np.ndarray
    base_offset: np.ndarray
    x0: float = None  # type: ignore[assignment]

    def __post_init__(self):
        q = np.atleast_1d(np.array(self.knots, dtype=float))
        s0 = np.atleast_1d(np.array(self.base_slope, dtype=float))
        f0 = np.atleast_1d(np.array(self.base_offset, dtype=float))
        t = s0.size
        mu = np.array(self.slope_changes, dtype=float)
        if mu.size != q.size * t or f0.size != t:
            raise CPWLError(f"inconsistent shapes: knots {q.shape}, mu {mu.shape}, T={t}")
        mu = mu.reshape(q.size, t)
        if q.size > 1 and np.any(np.diff(q) <= 0):
            raise CPWLError("knots must be strictly increasing")
        keep = np.linalg.norm(mu, axis=1) > 0.0
        q, mu = q[keep], mu[keep]
        x0 = self.x0
        if x0 is None:
            x0 = float(q[0]) if q.size else 0.0
        for arr in (q, mu, s0, f0):
            arr.setflags(write=False)
        object.__setattr__(self, "knots", q)
        object.__setattr__(self, "slope_changes", mu)
        object.__setattr__(self, "base_slope", s0)
        object.__setattr__(self, "base_offset", f0)
        object.__setattr__(self, "x0", float(x0))

    @property
    def n_knots(self) -> int:
        return self.knots.size

    @property
    def n_tasks(self) -> int:
        return self.base_slope.size

    def __call__(self, x):
        return evaluate(self, x)

    @classmethod
    def from_segments(cls, breaks, slopes, x_ref: float, y_ref) -> "CPWLFunction":
        """Build from breakpoints and per-segment slopes.

        ``breaks`` has M entries and ``slopes`` has M+1 rows (slope on
        each region, left to right).  The function passes through
        (x_ref, y_ref).  Zero slope changes are dropped automatically.
        """
        breaks = np.atleast_1d(np.asarray(breaks, dtype=float))
        slopes = np.asarray(slopes, dtype=float)
        if slopes.ndim == 1:
            slopes = slopes[:, None]
        if slopes.shape[0] != breaks.size + 1:
            raise CPWLError(f"need {breaks.size + 1} segment slopes, got {slopes.shape[0]}")
        mu = np.diff(slopes, axis=0)
        x0 = float(breaks[0]) if breaks.size else 0.0
        probe = cls(breaks, mu, slopes[0], np.zeros(slopes.shape[1]), x0)
        y_at_ref = evaluate(probe, x_ref)
        return cls(breaks, mu, slopes[0], np.asarray(y_ref, dtype=float) - y_at_ref, x0)


def evaluate(f: CPWLFunction, x) -> np.ndarray:
    """Evaluate exactly; scalar x gives (T,), an array of G points gives (G, T)."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = f.base_offset + np.outer(xs - f.x0, f.base_slope)
    if f.n_knots:
        hinges = np.maximum(xs[:, None] - f.knots[None, :], 0.0)
        hinges -= np.maximum(f.x0 - f.knots, 0.0)[None, :]
        out = out + hinges @ f.slope_changes
    if np.isscalar(x) or np.asarray(x).ndim == 0:
        return out[0]
    return out


def representational_cost(f: CPWLFunction) -> float:
    """sum_k ||mu_k||_2 over the knots; the affine part is free."""
    if f.n_knots == 0:
        return 0.0
    return float(np.sum(np.linalg.norm(f.slope_changes, axis=1)))


def segment_slopes(f: CPWLFunction) -> np.ndarray:
    """Slopes on the n_knots+1 regions, left to right; shape (M+1, T)."""
    return np.vstack([f.base_slope, f.base_slope + np.cumsum(f.slope_changes, axis=0)])


def chord_slopes(data: MultiTaskDataset) -> np.ndarray:
    """Straight-line slopes s_i between consecutive data points; (N-1, T)."""
    x = data.x
    return np.diff(data.labels, axis=0) / np.diff(x)[:, None]


def connect_the_dots(data: MultiTaskDataset) -> CPWLFunction:
    """The interpolant that joins consecutive data points with straight lines.

    Knots sit at interior data points (those with a nonzero slope
    change); the slopes on the two unbounded ends extend the first and
    last chords.
    """
    if not data.is_univariate:
        raise CPWLError("connect_the_dots requires univariate data")
    if data.n_points < 2:
        raise CPWLError("need at least two points")
    s = chord_slopes(data)
    x = data.x
    return CPWLFunction.from_segments(x[1:-1], s, float(x[0]), data.labels[0])


def knot_removal_delta(a, b, c, delta, tau: float, tol: float = 1e-12):
    """Cost of a spurious knot between two others versus a straight segment.

    Consider three consecutive knot locations with surrounding slopes a
    (incoming), b (the chord over the middle span) and c (outgoing), and
    a middle knot placed a fraction ``tau`` along the span that bends the
    two sub-segments to b + delta and b - tau/(1-tau) delta.  Its cost is

        ||delta + b - a|| + ||delta||/(1 - tau) + ||c - b + tau delta/(1-tau)||

    versus ``||b - a|| + ||c - b||`` for the straight segment.  The
    triangle inequality makes the first never smaller, with equality for
    some delta != 0 exactly when a - b, b - c and delta share a direction
    and ||delta|| <= min(||a - b||, (1-tau)/tau ||b - c||).

    Returns (cost_with_knot, cost_without, strictly_decreases) where the
    flag reports cost_with > cost_without + tol.
    """
    if not 0.0 < tau < 1.0:
        raise CPWLError(f"tau must lie in (0, 1), got {tau}")
    a, b, c, delta = (np.atleast_1d(np.asarray(u, dtype=float)) for u in (a, b, c, delta))
    cost_with = (
        np.linalg.norm(delta + b - a)
        + np.linalg.norm(delta) / (1.0 - tau)
        + np.linalg.norm(c - b + tau * delta / (1.0 - tau))
    )
    cost_without = np.linalg.norm(b - a) + np.linalg.norm(c - b)
    return float(cost_with), float(cost_without), bool(cost_with > cost_without + tol)


def _check_interpolates(f: CPWLFunction, data: MultiTaskDataset, tol: float) -> None:
    resid = np.abs(evaluate(f, data.x) - data.labels).max()
    scale = max(1.0, float(np.abs(data.labels).max()))
    if resid > tol * scale:
        raise CPWLError(f"function does not interpolate the data (residual {resid:.3e})")


def remove_extraneous_knots(f: CPWLFunction, data: MultiTaskDataset) -> CPWLFunction:
    """Straighten every span between consecutive data points.

    Repeatedly removing knots located away from the data points (and
    joining their neighbours with a straight line) never increases the
    representational cost; doing so across all spans leaves the
    straight-line interpolant of the data.  The input must interpolate
    ``data`` to 1e-9 relative.  Knots outside the data range are removed
    by extending the adjacent chord.
    """
    if not data.is_univariate:
        raise CPWLError("remove_extraneous_knots requires univariate data")
    _check_interpolates(f, data, 1e-9)
    values = evaluate(f, data.x)
    x = data.x
    slopes = np.diff(values, axis=0) / np.diff(x)[:, None]
    return CPWLFunction.from_segments(x[1:-1], slopes, float(x[0]), values[0])


@dataclass(frozen=True)
class AlignmentReport:
    """Slope-change alignment data at the interior data indices.

    For each interior index i (1-based positions 2..N-2), ``delta_prev``
    holds s_i - s_{i-1} and ``delta_next`` holds s_{i+1} - s_i.  The
    verdict is non-unique exactly when some index has both vectors
    nonzero with cosine >= 1 - cos_tol.
    """

    indices: tuple
    delta_prev: np.ndarray
    delta_next: np.ndarray
    both_nonzero: np.ndarray
    cosines: np.ndarray
    verdict: str
    cos_tol: float
    zero_tol: float

    @property
    def is_unique(self) -> bool:
        return self.verdict == "unique"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "cos_tol": self.cos_tol,
            "zero_tol": self.zero_tol,
            "indices": list(self.indices),
            "delta_prev": self.delta_prev.tolist(),
            "delta_next": self.delta_next.tolist(),
            "both_nonzero": self.both_nonzero.tolist(),
            "cosines": [None if np.isnan(v) else v for v in self.cosines.tolist()],
        }


def uniqueness_report(
    data: MultiTaskDataset, cos_tol: float = 1e-9, zero_tol_scale: float = 1e-9
) -> AlignmentReport:
    """Decide whether the straight-line interpolant is the unique optimum.

    Non-uniqueness requires, at some interior data index, two adjacent
    slope-change vectors that are both nonzero and aligned (cosine 1).
    Datasets with N <= 3 have no interior index pair and are always
    unique.  Nonzero means norm above ``zero_tol_scale`` times the label
    scale; alignment means cosine >= 1 - cos_tol.
    """
    if not data.is_univariate:
        raise CPWLError("uniqueness_report requires univariate data")
    s = chord_slopes(data)
    deltas = np.diff(s, axis=0)  # row i-2 is the change at interior point i
    zero_tol = zero_tol_scale * max(1.0, float(np.abs(data.labels).max()))
    idx, dp, dn, flags, cosines = [], [], [], [], []
    nonunique = False
    for i in range(deltas.shape[0] - 1):
        u1, u2 = deltas[i], deltas[i + 1]
        n1, n2 = np.linalg.norm(u1), np.linalg.norm(u2)
        both = bool(n1 > zero_tol and n2 > zero_tol)
        cos = float(u1 @ u2 / (n1 * n2)) if both else float("nan")
        if both and cos >= 1.0 - cos_tol:
            nonunique = True
        idx.append(i + 2)  # 1-based data index of the left interior point
        dp.append(u1)
        dn.append(u2)
        flags.append(both)
        cosines.append(cos)
    return AlignmentReport(
        indices=tuple(idx),
        delta_prev=np.array(dp) if dp else np.zeros((0, data.n_tasks)),
        delta_next=np.array(dn) if dn else np.zeros((0, data.n_tasks)),
        both_nonzero=np.array(flags, dtype=bool),
        cosines=np.array(cosines),
        verdict="non-unique" if nonunique else "unique",
        cos_tol=cos_tol,
        zero_tol=zero_tol,
    )


def net_to_cpwl(net: ShallowReLUNet) -> CPWLFunction:
    """Convert a univariate network to canonical CPWL form.

    The network is canonicalized first (all input weights +1, distinct
    activation locations), after which knot q_k = -b_k carries slope
    change mu_k = v_k and the residual supplies the affine part.
    The path-norm cost of the canonical network equals the
    representational cost of the result.
    """
    if net.input_dim != 1:
        raise NetworkError("net_to_cpwl requires a univariate network")
    net = canonicalize_univariate(net)
    live = np.linalg.norm(net.output_weights, axis=1) > 0.0
    locs = -net.biases[live]
    mus = net.output_weights[live]
    order = np.argsort(locs)
    locs, mus = locs[order], mus[order]
    base_slope = net.residual_matrix[:, 0]
    x0 = float(locs[0]) if locs.size else 0.0
    offset = net.residual_offset + base_slope * x0
    return CPWLFunction(locs, mus, base_slope, offset, x0)


def cpwl_to_net(f: CPWLFunction, width: int | None = None) -> ShallowReLUNet:
    """Realize a canonical CPWL function as a unit-normalized network.

    Knot q_k becomes neuron v_k (x - q_k)_+ with v_k = mu_k; the affine
    part becomes the residual term.  ``width`` pads with zero neurons
    and must be at least the number of knots.
    """
    m, t = f.n_knots, f.n_tasks
    k = max(1, m) if width is None else width
    if k < m:
        raise CPWLError(f"width {k} is smaller than the number of knots {m}")
    w = np.ones((k, 1))
    b = np.zeros(k)
    v = np.zeros((k, t))
    if m:
        b[:m] = -f.knots
        v[:m] = f.slope_changes
    a = f.base_slope[:, None]
    c = f.base_offset - f.base_slope * f.x0
    return ShallowReLUNet(w, b, v, a, c, unit_normalized=True)


def cpwl_to_json(f: CPWLFunction) -> str:
    payload = {
        "knots": f.knots.tolist(),
        "slope_changes": f.slope_changes.tolist(),
        "base_slope": f.base_slope.tolist(),
        "base_offset": f.base_offset.tolist(),
        "x0": f.x0,
    }
    return json.dumps(payload, indent=1)


def cpwl_from_json(text: str) -> CPWLFunction:
    p = json.loads(text)
    t = len(p["base_slope"])
    mu = np.array(p["slope_changes"], dtype=float).reshape(len(p["knots"]), t)
    return CPWLFunction(p["knots"], mu, p["base_slope"], p["base_offset"], p["x0"])


# ---------------------------------------------------------------------------
# Structured interpolant perturbations.
#
# These generators produce alternative interpolants of a dataset by bending
# the straight-line solution inside chosen spans while keeping every data
# point fixed.  They drive the optimality and uniqueness property tests.
# ---------------------------------------------------------------------------


def bent_interpolant(data: MultiTaskDataset, bends: dict) -> CPWLFunction:
    """Interpolant that bends selected spans of the straight-line solution.

    ``bends`` maps a 0-based span index j (between data points j and
    j+1) to a pair (tau, delta): the span is split at fraction tau, with
    slope s_j + delta on the left piece and s_j - tau/(1-tau) delta on
    the right piece, keeping both endpoints fixed.  Unbent spans stay
    straight.  The slopes on the two unbounded ends continue the
    adjacent piece, so no knot ever sits at the first or last data
    point.
    """
    if not data.is_univariate:
        raise CPWLError("bent_interpolant requires univariate data")
    x = data.x
    n = data.n_points
    s = chord_slopes(data)
    pieces: list[tuple[list[float], list[np.ndarray]]] = []
    for j in range(n - 1):
        if j in bends:
            tau, delta = bends[j]
            if not 0.0 < tau < 1.0:
                raise CPWLError(f"tau must lie in (0, 1), got {tau}")
            delta = np.atleast_1d(np.asarray(delta, dtype=float))
            x_mid = x[j] + tau * (x[j + 1] - x[j])
            pieces.append(([x_mid], [s[j] + delta, s[j] - tau / (1.0 - tau) * delta]))
        else:
            pieces.append(([], [s[j]]))
    breaks: list[float] = []
    slopes: list[np.ndarray] = [np.atleast_1d(pieces[0][1][0])]  # extend first piece leftward
    for j in range(n - 1):
        inner_breaks, inner_slopes = pieces[j]
        if j > 0:
            breaks.append(float(x[j]))
            slopes.append(np.atleast_1d(inner_slopes[0]))
        for q, sl in zip(inner_breaks, inner_slopes[1:]):
            breaks.append(float(q))
            slopes.append(np.atleast_1d(sl))
    # last piece extends rightward; no knot at x[n-1]
    return CPWLFunction.from_segments(breaks, np.vstack(slopes), float(x[0]), data.labels[0])


def insert_free_knot(data: MultiTaskDataset, interval: int, tau: float, delta) -> CPWLFunction:
    """Interpolant with one extra knot inside span ``interval``."""
    if not 0 <= interval <= data.n_points - 2:
        raise CPWLError(f"interval {interval} out of range for N={data.n_points}")
    return bent_interpolant(data, {interval: (tau, delta)})


def random_perturbed_interpolant(
    data: MultiTaskDataset, rng: np.random.Generator, n_inserts: int = 1, scale: float = 1.0
) -> CPWLFunction:
    """Interpolant with random extra knots in distinct random spans.

    Bend magnitudes are drawn between 0.1 and 1.0 times ``scale`` times
    the chord-slope scale of the data, so cost gaps of misaligned bends
    stay numerically resolvable.
    """
    n = data.n_points
    spans = rng.permutation(n - 1)[: max(1, min(n_inserts, n - 1))]
    slope_scale = max(1.0, float(np.abs(chord_slopes(data)).max()))
    bends = {}
    for j in sorted(int(v) for v in spans):
        tau = float(rng.uniform(0.15, 0.85))
        delta = rng.standard_normal(data.n_tasks)
        delta *= scale * slope_scale * rng.uniform(0.1, 1.0) / np.linalg.norm(delta)
        bends[j] = (tau, delta)
    return bent_interpolant(data, bends)


def equality_family_interpolant(
    data: MultiTaskDataset, interval: int, tau: float, frac: float
) -> CPWLFunction:
    """A same-cost interpolant at an aligned interior span.

    Requires the slope-change vectors flanking span ``interval`` to be
    aligned; bends the span by delta = frac * bound * direction, where
    direction follows a - b and bound is the largest magnitude keeping
    the knot cost unchanged, min(||a - b||, (1-tau)/tau ||b - c||).
    """
    if not 0.0 < frac <= 1.0:
        raise CPWLError(f"frac must lie in (0, 1], got {frac}")
    s = chord_slopes(data)
    if not 1 <= interval <= data.n_points - 3:
        raise CPWLError("equality family needs an interior span")
    a, b, c = s[interval - 1], s[interval], s[interval + 1]
    ab, bc = a - b, b - c
    na, nc = np.linalg.norm(ab), np.linalg.norm(bc)
    if na == 0 or nc == 0 or abs(ab @ bc / (na * nc) - 1.0) > 1e-9:
        raise CPWLError("flanking slope changes are not aligned; no equality family")
    bound = min(na, (1.0 - tau) / tau * nc)
    delta = frac * bound * ab / na
    return insert_free_knot(data, interval, tau, delta)
