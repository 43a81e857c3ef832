"""Kernel interpolation and ridge regression for two kernels.

Two reproducing kernels appear in this package:

- the first-order Sobolev kernel on an interval anchored at the leftmost
  data point x1,

      k(x, x') = 1 - (x - x')_+ + (x - x1)_+ + (x1 - x')_+,

  whose minimum-norm interpolant is linear between data points, and

- the frozen-neuron feature kernel

      kappa(x, x') = sum_k phi_k(x) phi_k(x') / Q_kk,
      phi_k(x) = (w_k . x + b_k)_+,

  the reproducing kernel of the span of the features phi_k under the
  inner product <f_v, f_u> = v^T Q u with diagonal positive Q.

Fitted models solve (G + lambda I) alpha = y on the Gram matrix G of the
centers; lambda = 0 recovers plain interpolation.  Solves use a
symmetric (Cholesky) factorization with escalating diagonal jitter
before declaring the system singular.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "SobolevKernel",
    "NeuronKernel",
    "KernelModel",
    "kernel_eval",
    "gram_matrix",
    "kernel_interpolate",
    "kernel_ridge",
    "ridge_dual_coefficients",
    "reproducing_property_check",
]


class KernelError(ValueError):
    """Raised for kernel spec mismatches or singular systems."""


@dataclass(frozen=True)
class SobolevKernel:
    """First-order Sobolev kernel anchored at x1 (univariate inputs)."""

    x1: float

    variant = "sobolev_h1"

    @classmethod
    def for_data(cls, data) -> "SobolevKernel":
        if not data.is_univariate:
            raise KernelError("the Sobolev kernel is univariate")
        return cls(float(data.x[0]))


@dataclass(frozen=True)
class NeuronKernel:
    """Frozen-neuron feature kernel with diagonal metric Q.

    ``weights`` is K' x d, ``biases`` length K', ``q_diag`` the strictly
    positive diagonal of Q.
    """

    weights: np.ndarray
    biases: np.ndarray
    q_diag: np.ndarray

    variant = "neuron_kernel"

    def __post_init__(self):
        w = np.atleast_2d(np.array(self.weights, dtype=float))
        b = np.atleast_1d(np.array(self.biases, dtype=float))
        q = np.atleast_1d(np.array(self.q_diag, dtype=float))
        if b.shape != (w.shape[0],) or q.shape != (w.shape[0],):
            raise KernelError(f"inconsistent feature shapes: W {w.shape}, b {b.shape}, q {q.shape}")
        if np.any(q <= 0):
            raise KernelError("q_diag entries must be strictly positive")
        for arr in (w, b, q):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "q_diag", q)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    def features(self, xs: np.ndarray) -> np.ndarray:
        """ReLU feature matrix Phi with Phi[i, k] = (w_k . x_i + b_k)_+."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.input_dim:
            raise KernelError(f"inputs with d={xs.shape[1]} do not match features (d={self.input_dim})")
        return np.maximum(xs @ self.weights.T + self.biases, 0.0)


def _as_points(spec, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if isinstance(spec, SobolevKernel):
        if xs.ndim == 0:
            xs = xs[None]
        if xs.ndim == 2 and xs.shape[1] == 1:
            xs = xs[:, 0]
        if xs.ndim != 1:
            raise KernelError("the Sobolev kernel takes scalar inputs")
        return xs
    if xs.ndim == 1:
        xs = xs[None, :] if xs.size == spec.input_dim else xs[:, None]
    return xs


def kernel_eval(spec, x, x2) -> float:
    """Evaluate the kernel at a single pair of points."""
    if isinstance(spec, SobolevKernel):
        a = float(np.asarray(x).reshape(()))
        b = float(np.asarray(x2).reshape(()))
        return 1.0 - max(a - b, 0.0) + max(a - spec.x1, 0.0) + max(spec.x1 - b, 0.0)
    pa = spec.features(np.asarray(x, dtype=float).reshape(1, -1))[0]
    pb = spec.features(np.asarray(x2, dtype=float).reshape(1, -1))[0]
    return float(np.sum(pa * pb / spec.q_diag))


def gram_matrix(spec, xs, xs2=None) -> np.ndarray:
    """Kernel matrix between two point sets (defaults to one set)."""
    if isinstance(spec, SobolevKernel):
        a = _as_points(spec, xs)
        b = a if xs2 is None else _as_points(spec, xs2)
        # for points >= x1: k(x, x') = 1 + min(x, x') - x1; keep the general form
        diff = a[:, None] - b[None, :]
        return (
            1.0
            - np.maximum(diff, 0.0)
            + np.maximum(a - spec.x1, 0.0)[:, None]
            + np.maximum(spec.x1 - b, 0.0)[None, :]
        )
    pa = spec.features(_as_points(spec, xs))
    pb = pa if xs2 is None else spec.features(_as_points(spec, xs2))
    return (pa / spec.q_diag) @ pb.T


def _solve_spd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve with jitter escalation 1e-12..1e-6 of trace/N."""
    n = mat.shape[0]
    base = float(np.trace(mat)) / max(n, 1)
    jitter = 0.0
    while True:
        try:
            factor = cho_factor(mat + jitter * np.eye(n), lower=True)
            return cho_solve(factor, rhs)
        except np.linalg.LinAlgError:
            jitter = 1e-12 * base if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-6 * base or base == 0.0:
                cond = float(np.linalg.cond(mat))
                raise KernelError(
                    f"Gram matrix numerically singular (cond ~ {cond:.3e}) even with jitter"
                ) from None


@dataclass(frozen=True)
class KernelModel:
    """A fitted kernel machine: prediction x -> sum_j alpha_j k(x, center_j)."""

    spec: object
    centers: np.ndarray
    alpha: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float)
        alpha = np.atleast_1d(np.array(self.alpha, dtype=float))
        if centers.shape[0] != alpha.shape[0]:
            raise KernelError("one coefficient per center required")
        centers.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "alpha", alpha)

    def predict(self, xs) -> np.ndarray:
        return gram_matrix(self.spec, xs, self.centers) @ self.alpha

    def output_weights(self) -> np.ndarray:
        """Feature-space view of a neuron-kernel model: v = Q^-1 Phi^T alpha."""
        if not isinstance(self.spec, NeuronKernel):
            raise KernelError("output_weights only exist for neuron kernels")
        phi = self.spec.features(self.centers)
        return (phi.T @ self.alpha) / self.spec.q_diag


def kernel_interpolate(spec, inputs, y) -> KernelModel:
    """Minimum-norm interpolation: solve G alpha = y on distinct centers."""
    return kernel_ridge(spec, inputs, y, 0.0)


def kernel_ridge(spec, inputs, y, lam: float) -> KernelModel:
    """Squared-loss kernel ridge: solve (G + lam I) alpha = y."""
    if lam < 0:
        raise KernelError(f"lambda must be nonnegative, got {lam}")
    centers = _as_points(spec, inputs)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    g = gram_matrix(spec, centers)
    if y.shape[0] != g.shape[0]:
        raise KernelError(f"{y.shape[0]} labels for {g.shape[0]} centers")
    alpha = _solve_spd(g + lam * np.eye(g.shape[0]), y)
    return KernelModel(spec, centers, alpha, lam)


def ridge_dual_coefficients(phi: np.ndarray, q_diag: np.ndarray, y: np.ndarray, lam: float):
    """Dual ridge solve on an explicit feature matrix.

    Returns (alpha, v) with alpha = (Phi Q^-1 Phi^T + lam I)^-1 y and
    v = Q^-1 Phi^T alpha, the minimizer of ||y - Phi v||^2 + lam v^T Q v.
    """
    phi = np.asarray(phi, dtype=float)
    q = np.asarray(q_diag, dtype=float)
    g = (phi / q) @ phi.T
    alpha = _solve_spd(g + lam * np.eye(g.shape[0]), np.asarray(y, dtype=float))
    return alpha, (phi.T @ alpha) / q


def reproducing_property_check(spec: NeuronKernel, v, x) -> float:
    """Residual |<kappa(., x), f_v> - f_v(x)| under the Q inner product.

    The representer of evaluation at x has coefficients u_k =
    phi_k(x) / Q_kk, so the inner product v^T Q u must reproduce f_v(x)
    up to roundoff.
    """
    if not isinstance(spec, NeuronKernel):
        raise KernelError("the reproducing-property check needs a neuron kernel")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    phi_x = spec.features(np.asarray(x, dtype=float).reshape(1, -1))[0]
    u = phi_x / spec.q_diag
    inner = float(v @ (spec.q_diag * u))
    fx = float(v @ phi_x)
    return abs(inner - fx)


def model_to_json(model: KernelModel) -> str:
    if isinstance(model.spec, SobolevKernel):
        spec = {"variant": "sobolev_h1", "x1": model.spec.x1}
    else:
        spec = {
            "variant": "neuron_kernel",
            "weights": model.spec.weights.tolist(),
            "biases": model.spec.biases.tolist(),
            "q_diag": model.spec.q_diag.tolist(),
        }
    payload = {
        "spec": spec,
        "centers": model.centers.tolist(),
        "alpha": model.alpha.tolist(),
        "lambda": model.lam,
    }
    return json.dumps(payload, indent=1)


def model_from_json(text: str) -> KernelModel:
    p = json.loads(text)
    spec_p = p["spec"]
    if spec_p["variant"] == "sobolev_h1":
        spec = SobolevKernel(spec_p["x1"])
    else:
        spec = NeuronKernel(spec_p["weights"], spec_p["biases"], spec_p["q_diag"])
    return KernelModel(spec, p["centers"], p["alpha"], p["lambda"])
