"""Shallow multi-output ReLU networks and their canonical forms.

The model is

    f(x) = sum_k v_k (w_k . x + b_k)_+  +  A x + c

with K neurons, input weights w_k in R^d, output weights v_k in R^T and
an affine residual (skip) term A x + c.  Two costs are attached to it:

- weight-decay cost: sum_k ||v_k||^2 + ||w_k||^2   (biases, residual free)
- path-norm cost:    sum_k ||v_k|| * ||w_k||       (rescaling invariant)

Positive homogeneity of the ReLU lets any network be rescaled neuron by
neuron without changing the function; on unit-normalized networks
(||w_k|| = 1 for active neurons) the two costs coincide up to the usual
2ab <= a^2 + b^2 relation, with equality for balanced neurons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShallowReLUNet",
    "forward",
    "forward_batch",
    "weight_decay_cost",
    "path_norm_cost",
    "unit_normalize",
    "canonicalize_univariate",
    "active_neurons",
    "default_active_threshold",
    "net_to_json",
    "net_from_json",
    "save_net",
    "load_net",
]


class NetworkError(ValueError):
    """Raised for inconsistent network parameters or invalid operations."""


@dataclass(frozen=True)
class ShallowReLUNet:
    """Parameter container: W (K x d), b (K,), V (K x T), A (T x d), c (T,)."""

    input_weights: np.ndarray
    biases: np.ndarray
    output_weights: np.ndarray
    residual_matrix: np.ndarray
    residual_offset: np.ndarray
    unit_normalized: bool = False

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.input_weights, dtype=float))
        v = np.atleast_2d(np.array(self.output_weights, dtype=float))
        b = np.atleast_1d(np.array(self.biases, dtype=float))
        a = np.atleast_2d(np.array(self.residual_matrix, dtype=float))
        c = np.atleast_1d(np.array(self.residual_offset, dtype=float))
        k, d = w.shape
        t = v.shape[1]
        if k < 1:
            raise NetworkError("network needs at least one neuron")
        if v.shape[0] != k or b.shape != (k,):
            raise NetworkError(f"inconsistent neuron count: W {w.shape}, V {v.shape}, b {b.shape}")
        if a.shape != (t, d) or c.shape != (t,):
            raise NetworkError(f"residual shapes {a.shape}, {c.shape} do not match (T={t}, d={d})")
        for name, arr in (("W", w), ("b", b), ("V", v), ("A", a), ("c", c)):
            arr.setflags(write=False)
        object.__setattr__(self, "input_weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "output_weights", v)
        object.__setattr__(self, "residual_matrix", a)
        object.__setattr__(self, "residual_offset", c)

    @property
    def width(self) -> int:
        return self.input_weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[1]

    @property
    def n_tasks(self) -> int:
        return self.output_weights.shape[1]


def forward(net: ShallowReLUNet, x) -> np.ndarray:
    """Evaluate the network at a single input point; returns a T-vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (net.input_dim,):
        raise NetworkError(f"input shape {x.shape} does not match d={net.input_dim}")
    return forward_batch(net, x[None, :])[0]


def forward_batch(net: ShallowReLUNet, xs: np.ndarray) -> np.ndarray:
    """Evaluate the network at an N x d batch of inputs; returns N x T."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != net.input_dim:
        raise NetworkError(f"batch shape {xs.shape} does not match d={net.input_dim}")
    acts = np.maximum(xs @ net.input_weights.T + net.biases, 0.0)
    return acts @ net.output_weights + xs @ net.residual_matrix.T + net.residual_offset


def weight_decay_cost(net: ShallowReLUNet) -> float:
    """sum_k ||v_k||^2 + ||w_k||^2; biases and residual are excluded."""
    return float(np.sum(net.output_weights**2) + np.sum(net.input_weights**2))


def path_norm_cost(net: ShallowReLUNet) -> float:
    """sum_k ||v_k|| * ||w_k||, invariant under per-neuron rescaling."""
    vn = np.linalg.norm(net.output_weights, axis=1)
    wn = np.linalg.norm(net.input_weights, axis=1)
    return float(np.sum(vn * wn))


def unit_normalize(net: ShallowReLUNet) -> ShallowReLUNet:
    """Rescale every neuron to a unit input weight, preserving the function.

    w_k -> w_k/||w_k||, b_k -> b_k/||w_k||, v_k -> v_k ||w_k||.  Neurons
    with w_k = 0 compute the constant v_k (b_k)_+; that constant is
    absorbed into the residual offset and the neuron zeroed out.
    """
    w = net.input_weights.copy()
    b = net.biases.copy()
    v = net.output_weights.copy()
    c = net.residual_offset.copy()
    norms = np.linalg.norm(w, axis=1)
    for k in range(net.width):
        n = norms[k]
        if n == 0.0:
            c = c + v[k] * max(b[k], 0.0)
            v[k] = 0.0
            b[k] = 0.0
        else:
            w[k] /= n
            b[k] /= n
            v[k] *= n
    return ShallowReLUNet(w, b, v, net.residual_matrix, c, unit_normalized=True)


def canonicalize_univariate(net: ShallowReLUNet, merge_tol: float | None = None) -> ShallowReLUNet:
    """Merge coincident univariate neurons into one neuron per location.

    The input is unit-normalized first, so every surviving input weight
    is +1 or -1 and neuron k activates at -b_k/w_k.  At each activation
    location, same-sign neurons are summed, and any negative-orientation
    component v (-(x - q))_+ is rewritten as v (x - q)_+ - v (x - q), the
    linear part moving into the residual term.  The result uses only
    +1 input weights, has strictly distinct activation locations, and
    never has a larger path-norm cost.  Locations closer than
    ``merge_tol`` are treated as coincident; the default is 1e-8 times
    the location spread (trained networks coincide only approximately).
    """
    if net.input_dim != 1:
        raise NetworkError("canonicalize_univariate requires a univariate network")
    net = unit_normalize(net)
    w = net.input_weights[:, 0]
    v = net.output_weights
    t = net.n_tasks
    a_slope = net.residual_matrix[:, 0].copy()
    c = net.residual_offset.copy()

    live = np.linalg.norm(v, axis=1) > 0.0
    locs = -net.biases[live] * w[live]  # w in {+1,-1}: -b/w == -b*w
    signs = w[live]
    vs = v[live]
    if merge_tol is None:
        spread = float(locs.max() - locs.min()) if locs.size > 1 else 0.0
        merge_tol = 1e-8 * max(spread, 1.0)

    merged: list[tuple[float, np.ndarray]] = []
    order = np.argsort(locs, kind="stable")
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and locs[order[j + 1]] - locs[order[j]] <= merge_tol:
            j += 1
        idx = order[i : j + 1]
        loc = float(np.mean(locs[idx]))
        v_plus = np.zeros(t)
        v_minus = np.zeros(t)
        for k in idx:
            if signs[k] > 0:
                v_plus += vs[k]
            else:
                v_minus += vs[k]
        if np.any(v_minus != 0.0):
            # v(-(x-q))_+ = v(x-q)_+ - v(x-q): linear part joins the residual
            a_slope -= v_minus
            c += v_minus * loc
        v_tot = v_plus + v_minus
        if np.linalg.norm(v_tot) > 0.0:
            merged.append((loc, v_tot))
        i = j + 1

    if merged:
        w_new = np.ones((len(merged), 1))
        b_new = np.array([-loc for loc, _ in merged])
        v_new = np.array([vk for _, vk in merged])
    else:
        w_new = np.ones((1, 1))
        b_new = np.zeros(1)
        v_new = np.zeros((1, t))
    return ShallowReLUNet(
        w_new, b_new, v_new, a_slope[:, None], c, unit_normalized=True
    )


def active_neurons(net: ShallowReLUNet, threshold: float = 0.0) -> np.ndarray:
    """Indices k with ||v_k|| strictly above ``threshold``."""
    if threshold < 0:
        raise NetworkError(f"threshold must be nonnegative, got {threshold}")
    return np.flatnonzero(np.linalg.norm(net.output_weights, axis=1) > threshold)


def default_active_threshold(net: ShallowReLUNet) -> float:
    """Scale-free activity cutoff: 1e-4 times the largest output-weight norm."""
    return 1e-4 * float(np.linalg.norm(net.output_weights, axis=1).max())


def net_to_json(net: ShallowReLUNet) -> str:
    """Serialize to JSON; floats keep their exact values via repr round-trip."""
    payload = {
        "input_weights": net.input_weights.tolist(),
        "biases": net.biases.tolist(),
        "output_weights": net.output_weights.tolist(),
        "residual_matrix": net.residual_matrix.tolist(),
        "residual_offset": net.residual_offset.tolist(),
        "unit_normalized": net.unit_normalized,
    }
    return json.dumps(payload, indent=1)


def net_from_json(text: str) -> ShallowReLUNet:
    payload = json.loads(text)
    return ShallowReLUNet(
        payload["input_weights"],
        payload["biases"],
        payload["output_weights"],
        payload["residual_matrix"],
        payload["residual_offset"],
        bool(payload.get("unit_normalized", False)),
    )


def save_net(net: ShallowReLUNet, path) -> None:
    with open(path, "w") as fh:
        fh.write(net_to_json(net))


def load_net(path) -> ShallowReLUNet:
    with open(path) as fh:
        return net_from_json(fh.read())
