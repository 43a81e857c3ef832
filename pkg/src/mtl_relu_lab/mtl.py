"""Single-task slices of the multi-task objective and their surrogates.

Freeze a trained multi-task network's hidden layer and look at one task
s.  Over the active neurons S (nonzero output-weight rows v_k*), the
exact objective in the free coordinates v_ks is

    J(v_s) = sum_i ( y_is - [Phi v_s]_i )^2
             + lam * sum_{k in S} || (v_ks, v*_{k\\s}) ||_2

where Phi_ik = (x_i . w_k* + b_k*)_+ and v*_{k\\s} is row k of the
optimal output weights with entry s removed.  Expanding the group norm
to second order in v_ks around 0 gives the quadratic surrogate

    H(v_s) = sum_i ( ... )^2
             + lam * sum_{k in S} ( ||v*_{k\\s}|| + v_ks^2 / (2 ||v*_{k\\s}||) )

with J <= H everywhere (drop the nonnegative quartic remainder).  The
quadratic part of H is a weighted-l2 penalty with weights
gamma_ks = 1 / ||v*_{k\\s}||, solvable in closed form; many exchangeable
tasks drive gamma_ks toward the common value 1 / ||v_k*|| and make the
surrogate minimizer near-optimal for J.  For a single task the group
norm collapses to an l1 penalty, solved here by accelerated proximal
gradient descent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import MultiTaskDataset
from .kernel import ridge_dual_coefficients
from .network import ShallowReLUNet, active_neurons, default_active_threshold, unit_normalize

__all__ = [
    "FeatureProblem",
    "build_feature_problem",
    "objective_J",
    "objective_H",
    "solve_weighted_l2",
    "solve_l1",
    "soft_threshold",
    "l1_kkt_residuals",
    "gap_report",
    "exchangeability_diagnostics",
]


class AnalysisError(ValueError):
    """Raised for ill-posed feature problems."""


class SolverError(RuntimeError):
    """Raised when an iterative solver fails to converge; carries the trace."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class FeatureProblem:
    """Frozen single-task problem data over the active neuron set.

    phi: N x K' feature matrix over active neurons; labels_s: task-s
    labels; v_star: K' x T optimal output weights; s: the task index
    inside v_star (or None when the target labels were not part of
    training); lam: group-penalty coefficient; gamma_s: the K'
    weighted-l2 weights.  ``leave_out_norms`` holds ||v*_{k\\s}||; a zero
    entry makes gamma infinite and the quadratic surrogate undefined.
    ``feature_weights`` / ``feature_biases`` optionally keep the frozen
    neuron parameters so the fitted combination can be evaluated at new
    points.
    """

    phi: np.ndarray
    labels_s: np.ndarray
    v_star: np.ndarray
    s: int | None
    lam: float
    leave_out_norms: np.ndarray
    feature_weights: np.ndarray | None = None
    feature_biases: np.ndarray | None = None

    def __post_init__(self):
        phi = np.atleast_2d(np.array(self.phi, dtype=float))
        y = np.atleast_1d(np.array(self.labels_s, dtype=float))
        v = np.atleast_2d(np.array(self.v_star, dtype=float))
        lo = np.atleast_1d(np.array(self.leave_out_norms, dtype=float))
        kp = phi.shape[1]
        if y.shape[0] != phi.shape[0]:
            raise AnalysisError(f"{y.shape[0]} labels for {phi.shape[0]} rows of phi")
        if v.shape[0] != kp or lo.shape != (kp,):
            raise AnalysisError("v_star / leave-out norms must have one row per feature column")
        if self.lam <= 0:
            raise AnalysisError(f"lambda must be positive, got {self.lam}")
        for arr in (phi, y, v, lo):
            arr.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "labels_s", y)
        object.__setattr__(self, "v_star", v)
        object.__setattr__(self, "leave_out_norms", lo)

    def features(self, xs: np.ndarray) -> np.ndarray:
        """Feature matrix of the frozen neurons at new points."""
        if self.feature_weights is None:
            raise AnalysisError("feature parameters were not recorded")
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        return np.maximum(xs @ self.feature_weights.T + self.feature_biases, 0.0)

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]

    @property
    def gamma_s(self) -> np.ndarray:
        """Weighted-l2 weights 1 / ||v*_{k\\s}||; infinite where the norm is 0."""
        with np.errstate(divide="ignore"):
            return np.where(self.leave_out_norms > 0.0, 1.0 / self.leave_out_norms, np.inf)

    @property
    def surrogate_defined(self) -> bool:
        return bool(np.all(self.leave_out_norms > 0.0))

    @property
    def v_star_s(self) -> np.ndarray:
        """The trained coordinates for task s (zeros when s is external)."""
        if self.s is None:
            return np.zeros(self.n_features)
        return self.v_star[:, self.s]


def build_feature_problem(
    net: ShallowReLUNet,
    data: MultiTaskDataset,
    s: int,
    lam: float,
    threshold: float | None = None,
    gamma_mode: str = "loo",
) -> FeatureProblem:
    """Snapshot the active neurons of a trained network for task ``s``.

    The network is unit-normalized first; neurons with output-weight
    norm above ``threshold`` form the active set.  The default cutoff is
    1e-8 of the largest norm -- far below the 1e-4 used for *counting*
    active neurons, because networks trained without a skip connection
    emulate constants through large-bias neurons whose output weights
    are small but whose contribution is not; dropping them would change
    the function the slice represents.  ``gamma_mode`` picks the
    weighted-l2 weights: ``"loo"`` uses the leave-one-task-out norms
    ||v*_{k\\s}||, while ``"common"`` uses the full row norms ||v_k*||
    (the large-T common value; also the right choice when the target
    task was not part of training -- pass the target labels as column
    ``s`` of ``data``).
    """
    if gamma_mode not in ("loo", "common"):
        raise AnalysisError(f"unknown gamma_mode {gamma_mode!r}")
    net = unit_normalize(net)
    if threshold is None:
        threshold = 1e-4 * default_active_threshold(net)
    active = active_neurons(net, threshold)
    if active.size == 0:
        raise AnalysisError(f"no active neurons at threshold {threshold:.3e}")
    w = net.input_weights[active]
    b = net.biases[active]
    v = net.output_weights[active]
    phi = np.maximum(data.inputs @ w.T + b, 0.0)
    y = data.task_column(s)
    row_norms = np.linalg.norm(v, axis=1)
    if gamma_mode == "common":
        leave_out = row_norms
        s_index: int | None = None
    else:
        leave_out = np.sqrt(np.maximum(row_norms**2 - v[:, s] ** 2, 0.0))
        s_index = s
    return FeatureProblem(phi, y, v, s_index, lam, leave_out, w, b)


def _fit_term(fp: FeatureProblem, v_s: np.ndarray) -> float:
    resid = fp.labels_s - fp.phi @ v_s
    return float(resid @ resid)


def objective_J(fp: FeatureProblem, v_s) -> float:
    """Exact single-task objective: squared loss plus the group penalty."""
    v_s = np.atleast_1d(np.asarray(v_s, dtype=float))
    if v_s.shape != (fp.n_features,):
        raise AnalysisError(f"v_s must have shape ({fp.n_features},), got {v_s.shape}")
    group = np.sqrt(v_s**2 + fp.leave_out_norms**2)
    return _fit_term(fp, v_s) + fp.lam * float(np.sum(group))


def objective_H(fp: FeatureProblem, v_s) -> float:
    """Quadratic surrogate of J; defined only when all gamma are finite."""
    if not fp.surrogate_defined:
        raise AnalysisError("surrogate undefined: some leave-out norm is zero")
    v_s = np.atleast_1d(np.asarray(v_s, dtype=float))
    if v_s.shape != (fp.n_features,):
        raise AnalysisError(f"v_s must have shape ({fp.n_features},), got {v_s.shape}")
    quad = fp.leave_out_norms + v_s**2 / (2.0 * fp.leave_out_norms)
    return _fit_term(fp, v_s) + fp.lam * float(np.sum(quad))


def solve_weighted_l2(fp: FeatureProblem) -> np.ndarray:
    """Closed-form minimizer of the weighted-l2 problem.

    Minimizes sum_i (y_is - [Phi v]_i)^2 + (lam/2) sum_k gamma_ks v_k^2
    through the dual ridge solve on Q = diag(gamma/2); equivalently the
    regularized normal equations (Phi^T Phi + (lam/2) diag(gamma)) v =
    Phi^T y.
    """
    if not fp.surrogate_defined:
        raise AnalysisError("weighted-l2 weights undefined: some leave-out norm is zero")
    _, v = ridge_dual_coefficients(fp.phi, fp.gamma_s / 2.0, fp.labels_s, fp.lam)
    return v


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def solve_l1(
    phi: np.ndarray,
    labels: np.ndarray,
    lam: float,
    max_iters: int = 100_000,
    rel_tol: float = 1e-10,
    kkt_tol: float = 1e-9,
) -> np.ndarray:
    """Accelerated proximal gradient for the l1-penalized least squares

        minimize ||y - Phi v||^2 + lam ||v||_1 .

    The step size is 1/L with L the largest eigenvalue of 2 Phi^T Phi,
    estimated by 50 power iterations; momentum restarts whenever the
    objective rises.  Stops once the optimality (subgradient) residuals
    fall below ``kkt_tol`` relative to the data scale, or once the
    relative objective change stays below ``rel_tol`` for 20 straight
    iterations; raises :class:`SolverError` with the objective trace on
    non-convergence.
    """
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    y = np.atleast_1d(np.asarray(labels, dtype=float))
    n, k = phi.shape
    gram2 = 2.0 * (phi.T @ phi)
    rhs2 = 2.0 * (phi.T @ y)
    scale = 1.0 + float(np.abs(rhs2).max(initial=0.0))

    # power iteration for the Lipschitz constant of the smooth part
    u = np.full(k, 1.0 / np.sqrt(k))
    for _ in range(50):
        u_next = gram2 @ u
        norm = np.linalg.norm(u_next)
        if norm == 0.0:
            break
        u = u_next / norm
    lip = float(u @ (gram2 @ u))
    if lip <= 0.0:
        return np.zeros(k)
    step = 1.0 / (lip * 1.01)  # power iteration slightly underestimates

    def objective(v):
        r = y - phi @ v
        return float(r @ r + lam * np.sum(np.abs(v)))

    def kkt_ok(v):
        grad = gram2 @ v - rhs2
        zero = v == 0.0
        bad_zero = np.abs(grad[zero]) - lam > kkt_tol * scale
        bad_active = np.abs(grad[~zero] + lam * np.sign(v[~zero])) > kkt_tol * scale
        return not (bad_zero.any() or bad_active.any())

    v = np.zeros(k)
    momentum = v.copy()
    t_acc = 1.0
    prev_obj = objective(v)
    trace = [prev_obj]
    flat_streak = 0
    accelerated = True
    for it in range(1, max_iters + 1):
        grad = gram2 @ momentum - rhs2
        v_next = soft_threshold(momentum - step * grad, step * lam)
        obj = objective(v_next)
        if accelerated:
            if obj > prev_obj:  # function restart
                momentum = v.copy()
                grad = gram2 @ momentum - rhs2
                v_next = soft_threshold(momentum - step * grad, step * lam)
                obj = objective(v_next)
                t_acc = 1.0
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc**2))
            momentum = v_next + ((t_acc - 1.0) / t_next) * (v_next - v)
            t_acc = t_next
        else:
            momentum = v_next
        v = v_next
        trace.append(obj)
        flat_streak = flat_streak + 1 if abs(prev_obj - obj) <= rel_tol * max(abs(prev_obj), 1.0) else 0
        prev_obj = obj
        if it % 25 == 0 and kkt_ok(v):
            return v
        if flat_streak >= 20 and accelerated:
            # momentum limit cycle: finish with plain monotone steps,
            # which contract until the optimality check passes
            accelerated = False
            momentum = v.copy()
            flat_streak = 0
    raise SolverError(f"proximal gradient did not converge in {max_iters} iterations", trace)


def l1_kkt_residuals(phi, labels, lam, v) -> tuple[float, float]:
    """(max violation on zero coords, max violation on active coords).

    Optimality requires |2 Phi^T (Phi v - y)|_k <= lam where v_k = 0 and
    2 Phi^T (Phi v - y)_k = -lam sign(v_k) elsewhere.
    """
    grad = 2.0 * np.asarray(phi).T @ (np.asarray(phi) @ v - np.asarray(labels))
    zero = v == 0.0
    viol_zero = float(np.max(np.abs(grad[zero]) - lam, initial=0.0))
    viol_active = float(np.max(np.abs(grad[~zero] + lam * np.sign(v[~zero])), initial=0.0))
    return viol_zero, viol_active


def gap_report(fp: FeatureProblem, v_star_s=None, v_prime=None) -> dict:
    """J and H at the trained point and at the surrogate minimizer.

    The reported gap J(v') - J(v*) is a measurement, not an assertion:
    its sign is only guaranteed when v* exactly minimizes J over the
    task-s coordinates, which numerically trained weights do only
    approximately.  When the surrogate is undefined (a zero leave-out
    norm) the surrogate-dependent entries come back as nan.
    """
    if v_star_s is None:
        v_star_s = fp.v_star_s
    if v_prime is None and fp.surrogate_defined:
        v_prime = solve_weighted_l2(fp)
    v_star_s = np.asarray(v_star_s, dtype=float)
    j_star = objective_J(fp, v_star_s)
    if v_prime is None:
        j_prime = float("nan")
    else:
        j_prime = objective_J(fp, np.asarray(v_prime, dtype=float))
    h_star = objective_H(fp, v_star_s) if fp.surrogate_defined else float("nan")
    return {
        "j_at_star": j_star,
        "j_at_prime": j_prime,
        "h_at_star": h_star,
        "gap": j_prime - j_star,
    }


def exchangeability_diagnostics(v_star: np.ndarray, beta: float = 2.0 / 3.0, slack: float = 0.10) -> dict:
    """Frequency checks implied by exchangeable task columns.

    For each neuron row k and task s, let r_ks = (v*_ks)^2 / sum_{t!=s}
    (v*_kt)^2 (infinite when the denominator vanishes while the
    numerator does not).  The report checks, with the given slack:

    - ratio tail:     freq{ r_ks >= T^-beta }  <=  (T^beta + 1)/T + slack
    - subvector mass: freq{ ||v*_{k\\s}||^2 >= (1 - T^(beta-1)) ||v*_k||^2 }
                      >=  1 - T^-beta - slack
    - row identity:   mean_s (v*_ks)^2 / (T^-1 sum_t (v*_kt)^2) = 1
                      exactly per row (up to 1e-12), an algebraic fact.

    Zero rows are excluded and listed in the report.
    """
    if not 0.0 < beta < 1.0:
        raise AnalysisError(f"beta must lie in (0, 1), got {beta}")
    v = np.atleast_2d(np.asarray(v_star, dtype=float))
    k_all, t = v.shape
    if t < 2:
        raise AnalysisError("need at least two tasks")
    sq = v**2
    row_sums = sq.sum(axis=1)
    nonzero = row_sums > 0.0
    excluded = np.flatnonzero(~nonzero).tolist()
    sq = sq[nonzero]
    row_sums = row_sums[nonzero]
    if sq.shape[0] == 0:
        raise AnalysisError("all rows of v_star are zero")

    denom = row_sums[:, None] - sq  # sum over t != s
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(denom > 0.0, sq / denom, np.where(sq > 0.0, np.inf, 0.0))
    infinite_pairs = int(np.sum(np.isinf(ratios)))

    thresh = t ** (-beta)
    ratio_freq = float(np.mean(ratios >= thresh))
    ratio_bound = (t**beta + 1.0) / t

    sub_ok = denom >= (1.0 - t ** (beta - 1.0)) * row_sums[:, None]
    sub_freq = float(np.mean(sub_ok))
    sub_bound = 1.0 - t ** (-beta)

    row_means = np.mean(sq / (row_sums[:, None] / t), axis=1)
    identity_err = float(np.max(np.abs(row_means - 1.0)))

    return {
        "beta": beta,
        "slack": slack,
        "n_tasks": t,
        "n_rows": int(sq.shape[0]),
        "excluded_zero_rows": excluded,
        "infinite_ratio_pairs": infinite_pairs,
        "ratio_tail_freq": ratio_freq,
        "ratio_tail_bound": ratio_bound,
        "ratio_tail_ok": ratio_freq <= ratio_bound + slack,
        "subvector_freq": sub_freq,
        "subvector_bound": sub_bound,
        "subvector_ok": sub_freq >= sub_bound - slack,
        "row_identity_max_err": identity_err,
        "row_identity_ok": identity_err <= 1e-12,
    }
