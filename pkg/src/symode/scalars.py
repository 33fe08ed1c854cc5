"""Base field tags and tolerance configuration shared by all modules."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Field(str, Enum):
    """Base field of the systems under study: real or complex."""

    REAL = "real"
    COMPLEX = "complex"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float64 if self is Field.REAL else np.complex128)


class FieldError(TypeError):
    """Raised when complex data is used under a real field tag without promotion."""


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical thresholds used throughout the kernel.

    rank_tol is a relative singular-value cutoff for rank/nullspace decisions,
    eig_cluster_tol the eigenvalue clustering radius, residual_tol the target
    for ODE/algebraic residuals.  Invariant: 0 < rank_tol < eig_cluster_tol < 1.
    """

    rank_tol: float = 1e-9
    eig_cluster_tol: float = 1e-7
    residual_tol: float = 1e-6

    def __post_init__(self) -> None:
        if not (0.0 < self.rank_tol < self.eig_cluster_tol < 1.0):
            raise ValueError("require 0 < rank_tol < eig_cluster_tol < 1")
        if self.residual_tol <= 0.0:
            raise ValueError("residual_tol must be positive")


DEFAULT_TOL = ToleranceConfig()


def as_field_array(value, field: Field, shape=None) -> np.ndarray:
    """Coerce ``value`` to an ndarray of the field's dtype.

    Complex input under a real tag raises FieldError unless the imaginary part
    is exactly zero; promotion must be requested by tagging the data complex.
    """
    arr = np.asarray(value)
    if field is Field.REAL:
        if np.iscomplexobj(arr):
            if np.any(arr.imag != 0.0):
                raise FieldError("complex entries under a real field tag; promote explicitly")
            arr = arr.real
        arr = arr.astype(np.float64)
    else:
        arr = arr.astype(np.complex128)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {arr.shape}")
    return arr


def field_of(arr: np.ndarray) -> Field:
    return Field.COMPLEX if np.iscomplexobj(arr) else Field.REAL


def promote(arr: np.ndarray) -> np.ndarray:
    """Explicit promotion of real data to the complex field."""
    return np.asarray(arr, dtype=np.complex128)
