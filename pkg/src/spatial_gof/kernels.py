"""Kernels, diagonal bandwidth matrices and kernel self-convolutions."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

TRIWEIGHT = "triweight"
GAUSSIAN = "gaussian"
FAMILIES = (TRIWEIGHT, GAUSSIAN)

# 1/512 is the coarsest step allowed for the numeric convolutions
_CONV_STEP = 1.0 / 1024


class DimensionMismatch(ValueError):
    pass


class UnsupportedOrder(ValueError):
    pass


def _triweight_1d(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 35.0 / 32.0 * (1.0 - u * u) ** 3, 0.0)


@lru_cache(maxsize=None)
def _triweight_selfconv_1d(j):
    """``k^{(j)}(0)`` for the univariate triweight by grid convolution."""
    t = np.arange(-1.0, 1.0 + _CONV_STEP / 2, _CONV_STEP)
    k = _triweight_1d(t)
    k2 = np.convolve(k, k) * _CONV_STEP  # support [-2, 2]
    if j == 2:
        return float(np.sum(k * k) * _CONV_STEP)
    # k^{(4)}(0) = int (k*k)(t)^2 dt since k*k is even
    return float(np.sum(k2 * k2) * _CONV_STEP)


@dataclass(frozen=True)
class KernelSpec:
    """A d-dimensional kernel density.

    ``family`` is ``"triweight"`` (the product of univariate triweights,
    supported on ``[-1, 1]^d``) or ``"gaussian"`` (standard normal density).
    """

    family: str = TRIWEIGHT
    dim: int = 2
    _selfconv: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if int(self.dim) < 1:
            raise ValueError("kernel dimension must be >= 1")
        # filled eagerly so later reads never compute
        conv = {j: self._compute_selfconv(j) for j in (2, 4)}
        object.__setattr__(self, "_selfconv", conv)

    @property
    def support_radius(self):
        """Half-width of the (per-axis) support, ``inf`` for the Gaussian."""
        return 1.0 if self.family == TRIWEIGHT else np.inf

    def __call__(self, u):
        return kernel_eval(self, u)

    def _compute_selfconv(self, j):
        if self.family == GAUSSIAN:
            # j-fold convolution of N(0, I) is N(0, jI)
            return float((2.0 * np.pi * j) ** (-self.dim / 2.0))
        return _triweight_selfconv_1d(j) ** self.dim


@dataclass(frozen=True)
class BandwidthMatrix:
    """Diagonal bandwidth matrix ``H = diag(h_1, ..., h_d)``."""

    diagonal: tuple

    def __init__(self, diagonal):
        diag = tuple(float(h) for h in np.atleast_1d(diagonal))
        if not diag or any(not np.isfinite(h) or h <= 0 for h in diag):
            raise ValueError(f"bandwidths must be positive and finite, got {diag}")
        object.__setattr__(self, "diagonal", diag)

    @classmethod
    def scalar(cls, h, dim=2):
        return cls([h] * dim)

    @property
    def dim(self):
        return len(self.diagonal)

    @property
    def h(self):
        return np.asarray(self.diagonal)

    @property
    def det(self):
        return float(np.prod(self.diagonal))

    def matrix(self):
        return np.diag(self.diagonal)

    def __str__(self):
        return "diag(" + ", ".join(f"{h:g}" for h in self.diagonal) + ")"


def kernel_eval(k: KernelSpec, u) -> np.ndarray:
    """Evaluate the kernel at points ``u`` with trailing axis of length ``k.dim``."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != k.dim:
        raise DimensionMismatch(f"kernel has dim {k.dim}, points have {u.shape[-1]}")
    if k.family == GAUSSIAN:
        return np.exp(-0.5 * np.sum(u * u, axis=-1)) / (2.0 * np.pi) ** (k.dim / 2.0)
    return np.prod(_triweight_1d(u), axis=-1)


def kernel_scaled(k: KernelSpec, h: BandwidthMatrix, x) -> np.ndarray:
    """``K_H(x) = |H|^{-1} K(H^{-1} x)`` for diagonal ``H``."""
    x = np.asarray(x, dtype=float)
    if h.dim != k.dim or x.shape[-1] != k.dim:
        raise DimensionMismatch("kernel, bandwidth and point dimensions disagree")
    return kernel_eval(k, x / h.h) / h.det


def self_convolution_at_zero(k: KernelSpec, j: int) -> float:
    """``K^{(j)}(0)``, the j-fold convolution of the kernel with itself at 0.

    Only ``j`` in ``{2, 4}`` is supported.
    """
    if j not in (2, 4):
        raise UnsupportedOrder(f"self-convolution order must be 2 or 4, got {j}")
    return k._selfconv[j]
