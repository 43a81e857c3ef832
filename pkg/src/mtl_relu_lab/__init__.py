"""Multi-task shallow ReLU interpolation lab.

A small numerical laboratory for studying what one-hidden-layer ReLU
networks learn when trained on several tasks at once with weight decay
on the neuron weights.  The package provides:

- ``dataset``: multi-task datasets, random task generators, CSV I/O.
- ``network``: the shallow ReLU network, its costs, canonical forms.
- ``training``: full-batch Adam fitting with analytic gradients.
- ``cpwl``: univariate continuous piecewise-linear functions, the
  connect-the-dots interpolant, knot calculus and uniqueness checks.
- ``kernel``: the first-order Sobolev kernel and the frozen-neuron
  feature kernel, interpolation and ridge regression.
- ``mtl``: single-task slices of the group-penalized objective, their
  quadratic surrogate, weighted-l2 / l1 solvers and exchangeability
  diagnostics.
- ``experiments`` / ``cli``: reproducible experiment runs with JSON/CSV
  artifacts, driven by the ``mtl-relu-lab`` command.
"""

__version__ = "0.1.0"

from .dataset import MultiTaskDataset, TaskGenSpec
from .network import ShallowReLUNet
from .cpwl import CPWLFunction

__all__ = [
    "MultiTaskDataset",
    "TaskGenSpec",
    "ShallowReLUNet",
    "CPWLFunction",
    "__version__",
]
