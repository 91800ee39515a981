"""Sparsification of fully-connected ReLU networks by sensitivity-driven
importance sampling.

Per-edge empirical sensitivities drive an importance-sampled sparsifier with
neuron pruning and amplification on top, plus uniform/l1/l2/hybrid/SVD
baselines, theory-driven sample sizing, and a sweep harness. See the CLI
(`corenet --help`) for the end-to-end workflows.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
