"""Full-batch training of shallow ReLU networks.

The objective is squared-error data fit plus weight decay on the neuron
input and output weights only; biases and the residual (skip) term are
never regularized.  Two loss conventions are supported: the sum of
per-point squared errors (the default used by the experiment configs)
and the mean over points.  Under Adam the two differ only through the
lambda-to-loss ratio, so configs record the convention explicitly.

Gradients are analytic, with the ReLU subgradient taken to be 0 at an
exactly-zero pre-activation (a measure-zero event during training).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import MultiTaskDataset
from .network import NetworkError, ShallowReLUNet

__all__ = [
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "objective_and_gradient",
    "init_net",
    "adam_train",
    "regularized_loss_objective",
]

REGULARIZABLE = ("input_weights", "output_weights")


class TrainingDiverged(RuntimeError):
    """Raised when the objective becomes non-finite; carries the trace."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run.

    ``regularize`` may only contain input/output weight blocks; biases
    and the residual term stay unpenalized by construction.  ``sum_loss``
    selects the sum-of-squared-errors convention (True) or the mean over
    points (False); quoted lambda values follow the sum convention.
    ``plateau_tol`` is the relative improvement below which training
    stops early (0 disables the plateau stop entirely).
    """

    lam: float = 1e-5
    width: int = 20
    learning_rate: float = 1e-3
    max_iters: int = 200_000
    plateau_tol: float = 1e-10
    plateau_window: int = 20
    seed: int = 0
    regularize: tuple = REGULARIZABLE
    skip_connection: bool = True
    sum_loss: bool = True
    check_every: int = 500

    def __post_init__(self):
        if self.lam < 0 or self.width < 1 or self.learning_rate <= 0 or self.max_iters < 1:
            raise ValueError("invalid training configuration")
        bad = set(self.regularize) - set(REGULARIZABLE)
        if bad:
            raise ValueError(f"cannot regularize {sorted(bad)}; biases and residual are never penalized")
        object.__setattr__(self, "regularize", tuple(self.regularize))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regularize"] = list(self.regularize)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "regularize" in d:
            d["regularize"] = tuple(d["regularize"])
        return cls(**d)


@dataclass
class TrainReport:
    final_loss: float
    final_objective: float
    iterations_run: int
    converged: bool
    objective_trace: list = field(default_factory=list)  # (iteration, objective) pairs

    def to_dict(self) -> dict:
        return {
            "final_loss": self.final_loss,
            "final_objective": self.final_objective,
            "iterations_run": self.iterations_run,
            "converged": self.converged,
            "objective_trace": self.objective_trace,
        }


def _loss_scale(n: int, sum_loss: bool) -> float:
    return 1.0 if sum_loss else 1.0 / n


def _obj_grad(params: dict, x, y, lam, regularize, scale, skip_connection):
    w, b, v = params["input_weights"], params["biases"], params["output_weights"]
    a, c = params["residual_matrix"], params["residual_offset"]

    z = x @ w.T + b
    acts = np.maximum(z, 0.0)
    pred = acts @ v + x @ a.T + c
    resid = pred - y
    loss = scale * float(np.sum(resid * resid))

    g_pred = (2.0 * scale) * resid
    grad_v = acts.T @ g_pred
    d_z = (g_pred @ v.T) * (z > 0.0)
    grad_w = d_z.T @ x
    grad_b = d_z.sum(axis=0)
    if skip_connection:
        grad_a = g_pred.T @ x
        grad_c = g_pred.sum(axis=0)
    else:
        grad_a = np.zeros_like(a)
        grad_c = np.zeros_like(c)

    penalty = 0.0
    if lam:
        if "input_weights" in regularize:
            penalty += float(np.sum(w * w))
            grad_w += 2.0 * lam * w
        if "output_weights" in regularize:
            penalty += float(np.sum(v * v))
            grad_v += 2.0 * lam * v
    grads = {
        "input_weights": grad_w,
        "biases": grad_b,
        "output_weights": grad_v,
        "residual_matrix": grad_a,
        "residual_offset": grad_c,
    }
    return loss + lam * penalty, grads


def objective_and_gradient(
    net: ShallowReLUNet,
    data: MultiTaskDataset,
    lam: float,
    regularize: tuple = REGULARIZABLE,
    sum_loss: bool = False,
    skip_connection: bool = True,
):
    """Objective value and its gradient in every parameter block.

    value = sum_i ||f(x_i) - y_i||^2 / N  +  lam * (regularized weight
    norms squared); with ``sum_loss`` the 1/N factor is dropped.  The
    gradient is returned as a dict with keys matching the parameter
    block names; when ``skip_connection`` is false the residual blocks
    get zero gradients (frozen at their current values).
    """
    x, y = data.inputs, data.labels
    if x.shape[1] != net.input_dim or y.shape[1] != net.n_tasks:
        raise NetworkError(
            f"data with d={x.shape[1]}, T={y.shape[1]} does not match net "
            f"(d={net.input_dim}, T={net.n_tasks})"
        )
    params = {
        "input_weights": net.input_weights,
        "biases": net.biases,
        "output_weights": net.output_weights,
        "residual_matrix": net.residual_matrix,
        "residual_offset": net.residual_offset,
    }
    scale = _loss_scale(data.n_points, sum_loss)
    return _obj_grad(params, x, y, lam, regularize, scale, skip_connection)


def mse(net: ShallowReLUNet, data: MultiTaskDataset, task: int | None = None) -> float:
    """Mean squared error over points, for one task or averaged over all."""
    from .network import forward_batch

    resid = forward_batch(net, data.inputs) - data.labels
    if task is not None:
        resid = resid[:, task : task + 1]
    return float(np.mean(np.sum(resid**2, axis=1)))


def init_net(data: MultiTaskDataset, config: TrainConfig) -> ShallowReLUNet:
    """Random starting point: W, b uniform on [-1, 1]/sqrt(d); V normal
    with std 0.1/sqrt(K); residual zero."""
    rng = np.random.default_rng(config.seed)
    d, t, k = data.input_dim, data.n_tasks, config.width
    w = rng.uniform(-1.0, 1.0, size=(k, d)) / np.sqrt(d)
    b = rng.uniform(-1.0, 1.0, size=k) / np.sqrt(d)
    v = rng.standard_normal((k, t)) * (0.1 / np.sqrt(k))
    return ShallowReLUNet(w, b, v, np.zeros((t, d)), np.zeros(t))


def adam_train(
    net0: ShallowReLUNet, data: MultiTaskDataset, config: TrainConfig
) -> tuple[ShallowReLUNet, TrainReport]:
    """Run Adam (beta1=0.9, beta2=0.999, eps=1e-8) to a plateau or max_iters.

    Training stops early once the objective has improved by less than
    ``plateau_tol`` (relative) over the last ``plateau_window`` checks,
    taken every ``check_every`` iterations; ``plateau_tol = 0`` disables
    early stopping (Adam's objective is non-monotone, so a zero
    tolerance would fire on any non-improving window).  The run is
    deterministic given (net0, data, config).  A non-finite objective
    raises :class:`TrainingDiverged` with the trace collected so far.
    """
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    lr = config.learning_rate
    x, y = data.inputs, data.labels
    n, d = x.shape
    t = y.shape[1]
    k = net0.width
    scale = _loss_scale(n, config.sum_loss)
    reg_w = "input_weights" in config.regularize
    reg_v = "output_weights" in config.regularize
    lam = config.lam

    # one flat parameter vector; blocks are views, so in-place Adam
    # updates on the flat arrays move the blocks directly
    sizes = [k * d, k, k * t, t * d, t]
    offsets = np.cumsum([0] + sizes)
    theta = np.concatenate(
        [
            net0.input_weights.ravel(),
            net0.biases.ravel(),
            net0.output_weights.ravel(),
            net0.residual_matrix.ravel(),
            net0.residual_offset.ravel(),
        ]
    )
    grad = np.zeros_like(theta)

    def block(vec, i, shape):
        return vec[offsets[i] : offsets[i + 1]].reshape(shape)

    w = block(theta, 0, (k, d))
    b = block(theta, 1, (k,))
    v = block(theta, 2, (k, t))
    a = block(theta, 3, (t, d))
    c = block(theta, 4, (t,))
    g_w = block(grad, 0, (k, d))
    g_b = block(grad, 1, (k,))
    g_v = block(grad, 2, (k, t))
    g_a = block(grad, 3, (t, d))
    g_c = block(grad, 4, (t,))

    n_upd = offsets[3] if not config.skip_connection else offsets[5]
    th_u, g_u = theta[:n_upd], grad[:n_upd]
    m = np.zeros(n_upd)
    s = np.zeros(n_upd)

    trace: list = []
    trace_every = max(1, config.max_iters // 1000)
    window: list = []
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        z = x @ w.T
        z += b
        acts = np.maximum(z, 0.0)
        pred = acts @ v
        pred += x @ a.T
        pred += c
        resid = pred
        resid -= y
        value = scale * float(np.einsum("ij,ij->", resid, resid))
        resid *= 2.0 * scale
        np.matmul(acts.T, resid, out=g_v)
        d_z = resid @ v.T
        d_z *= z > 0.0
        np.matmul(d_z.T, x, out=g_w)
        np.sum(d_z, axis=0, out=g_b)
        if config.skip_connection:
            np.matmul(resid.T, x, out=g_a)
            np.sum(resid, axis=0, out=g_c)
        if lam:
            if reg_w:
                value += lam * float(np.einsum("ij,ij->", w, w))
                g_w += (2.0 * lam) * w
            if reg_v:
                value += lam * float(np.einsum("ij,ij->", v, v))
                g_v += (2.0 * lam) * v
        if it == 1 or it % trace_every == 0:
            trace.append((it, value))
        if not np.isfinite(value):
            trace.append((it, value))
            raise TrainingDiverged(f"objective became non-finite at iteration {it}", trace)

        m *= beta1
        m += (1.0 - beta1) * g_u
        s *= beta2
        s += (1.0 - beta2) * g_u * g_u
        denom = np.sqrt(s / (1.0 - beta2**it))
        denom += eps
        th_u -= (lr / (1.0 - beta1**it)) * m / denom

        if config.plateau_tol > 0.0 and it % config.check_every == 0:
            window.append(value)
            if len(window) > config.plateau_window:
                window.pop(0)
                old, new = window[0], window[-1]
                if old - new < config.plateau_tol * max(abs(old), 1e-300):
                    converged = True
                    break

    final = ShallowReLUNet(w, b, v, a, c)
    params = {
        "input_weights": w,
        "biases": b,
        "output_weights": v,
        "residual_matrix": a,
        "residual_offset": c,
    }
    final_value, _ = _obj_grad(
        params, x, y, config.lam, config.regularize, scale, config.skip_connection
    )
    loss_only, _ = _obj_grad(params, x, y, 0.0, config.regularize, scale, config.skip_connection)
    trace.append((it, final_value))
    report = TrainReport(
        final_loss=loss_only,
        final_objective=final_value,
        iterations_run=it,
        converged=converged,
        objective_trace=trace,
    )
    return final, report


def regularized_loss_objective(net: ShallowReLUNet, data: MultiTaskDataset, lam: float) -> float:
    """Sum of squared errors plus lam times the sum of output-weight norms.

    Evaluation-only diagnostic for unit-normalized univariate networks:
    on an interpolating network it reduces to lam times the path norm.
    """
    if net.input_dim != 1:
        raise NetworkError("regularized_loss_objective requires a univariate network")
    if not net.unit_normalized:
        raise NetworkError("network must be unit-normalized")
    from .network import forward_batch

    resid = forward_batch(net, data.inputs) - data.labels
    loss = float(np.sum(resid**2))
    return loss + lam * float(np.sum(np.linalg.norm(net.output_weights, axis=1)))


def save_report(report: TrainReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)


def save_trace_csv(report: TrainReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,objective\n")
        for it, val in report.objective_trace:
            fh.write(f"{it},{val!r}\n")
