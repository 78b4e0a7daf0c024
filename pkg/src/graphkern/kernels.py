"""Basis kernel dictionaries over a fixed set of training inputs.

A dictionary holds S precomputed N x N kernel matrices, one per basis
kernel, over the same N training inputs.  The effective kernel used for
regression is the weighted sum ``K = sum_s rho_s K_s`` with nonnegative
weights, formed by :func:`combine`.

Two kernel families are supported: Gaussian ``exp(-||x - x'||^2 / (2 s2))``
parameterized by the variance ``s2``, and the linear kernel ``x^T x'``.
Dictionaries are immutable after construction; per-kernel matrices may be
read concurrently.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

GAUSSIAN = "gaussian"
LINEAR = "linear"
_FAMILIES = (GAUSSIAN, LINEAR)


@dataclass(frozen=True)
class KernelSpec:
    """One basis kernel: a family plus its parameter.

    ``parameter`` is the Gaussian variance (must be positive); it is
    ignored for the linear kernel.
    """

    family: str
    parameter: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == GAUSSIAN and not self.parameter > 0:
            raise ValueError("Gaussian kernel variance must be positive")


def kernel_eval(spec, x, x2):
    """Evaluate one basis kernel on a pair of input vectors."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape or x.ndim != 1:
        raise ValueError(f"input vectors must share one shape, got {x.shape} and {x2.shape}")
    if spec.family == LINEAR:
        return float(x @ x2)
    sq = float(np.sum((x - x2) ** 2))
    return float(np.exp(-sq / (2.0 * spec.parameter)))


class KernelDictionary:
    """S basis kernel matrices over N training inputs.

    Attributes
    ----------
    specs : tuple of KernelSpec
        The generating kernels, in order.
    training_inputs : (N, L) array
        Row ``n`` is the n-th training input.
    matrices : (S, N, N) array
        ``matrices[s]`` is the Gram matrix of ``specs[s]`` over the inputs.
    """

    def __init__(self, specs, training_inputs, matrices):
        self.specs = tuple(specs)
        self.training_inputs = training_inputs
        self.matrices = matrices
        self.training_inputs.setflags(write=False)
        self.matrices.setflags(write=False)

    @classmethod
    def from_specs(cls, training_inputs, specs):
        """Build a dictionary from explicit kernel specs."""
        x = _validated_inputs(training_inputs)
        specs = tuple(specs)
        if not specs:
            raise ValueError("need at least one kernel spec")
        n = x.shape[0]
        sq = None
        mats = np.empty((len(specs), n, n))
        for i, spec in enumerate(specs):
            if spec.family == LINEAR:
                mats[i] = x @ x.T
            else:
                if sq is None:
                    sq = cdist(x, x, "sqeuclidean")
                mats[i] = np.exp(-sq / (2.0 * spec.parameter))
        return cls(specs, x, mats)

    @property
    def num_kernels(self):
        return len(self.specs)

    @property
    def num_samples(self):
        return self.training_inputs.shape[0]

    def __repr__(self):
        return (
            f"KernelDictionary(num_kernels={self.num_kernels}, "
            f"num_samples={self.num_samples})"
        )


def build_dictionary(training_inputs, family=GAUSSIAN, span=(0.01, 10.0), count=100):
    """Build a dictionary from a uniform parameter grid.

    For the Gaussian family the grid places ``count`` variances uniformly
    over ``span = (lo, hi)``: ``s2_s = lo + (s - 1) (hi - lo) / (count - 1)``
    (a single-kernel grid uses ``lo``).  The linear kernel has no
    parameter, so the grid degenerates to ``count`` copies and is normally
    used with ``count=1``.
    """
    lo, hi = float(span[0]), float(span[1])
    if count < 1:
        raise ValueError("kernel count must be at least 1")
    if family == GAUSSIAN and (lo <= 0 or hi <= lo):
        raise ValueError(f"invalid parameter span [{lo}, {hi}]: need 0 < lo < hi")
    if family == LINEAR:
        specs = [KernelSpec(LINEAR) for _ in range(count)]
    else:
        specs = [KernelSpec(GAUSSIAN, p) for p in np.linspace(lo, hi, count)]
    return KernelDictionary.from_specs(training_inputs, specs)


def _validated_inputs(training_inputs):
    x = np.asarray(training_inputs, dtype=float)
    if x.ndim != 2:
        raise ValueError("training inputs must be a 2-D array (rows are samples)")
    if x.shape[0] < 1:
        raise ValueError("training set is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError("training inputs contain NaN or Inf")
    return x


def _checked_weights(dictionary, rho, allow_negative=False):
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (dictionary.num_kernels,):
        raise ValueError(
            f"weight vector has shape {rho.shape}, expected "
            f"({dictionary.num_kernels},)"
        )
    if not allow_negative and np.any(rho < 0):
        raise ValueError("kernel weights must be nonnegative")
    return rho


def combine(dictionary, rho):
    """Weighted kernel matrix ``sum_s rho_s K_s`` (symmetric PSD)."""
    rho = _checked_weights(dictionary, rho)
    return _combine_unchecked(dictionary, rho)


def _combine_unchecked(dictionary, rho):
    # internal path: solvers and momentum extrapolation may pass weights
    # with (slightly) negative components
    return np.tensordot(rho, dictionary.matrices, axes=([0], [0]))


def kernel_cross(dictionary, rho, inputs):
    """Combined-kernel evaluations between new inputs and the training set.

    Returns a (K, N) matrix whose row ``k`` is the combined kernel vector
    of ``inputs[k]`` against the N training inputs.
    """
    rho = _checked_weights(dictionary, rho, allow_negative=True)
    x2 = np.asarray(inputs, dtype=float)
    if x2.ndim != 2 or x2.shape[1] != dictionary.training_inputs.shape[1]:
        raise ValueError(
            f"inputs must be 2-D with {dictionary.training_inputs.shape[1]} columns"
        )
    x = dictionary.training_inputs
    out = np.zeros((x2.shape[0], x.shape[0]))
    sq = None
    for weight, spec in zip(rho, dictionary.specs):
        if weight == 0.0:
            continue
        if spec.family == LINEAR:
            out += weight * (x2 @ x.T)
        else:
            if sq is None:
                sq = cdist(x2, x, "sqeuclidean")
            out += weight * np.exp(-sq / (2.0 * spec.parameter))
    return out


def kernel_vector(dictionary, rho, x):
    """Combined kernel vector ``[k(x_1, x), ..., k(x_N, x)]`` for one input."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be a 1-D input vector")
    rho = _checked_weights(dictionary, rho)
    return kernel_cross(dictionary, rho, x[None, :])[0]
