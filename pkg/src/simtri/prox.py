"""Proximal setup: norm, prox-function and Bregman divergence.

Both accelerated solvers are written against this abstraction so they stay
generic in the prox geometry; only the Euclidean instance ships, since that
is the setup actually used by the primal-dual method and the benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError


@dataclass(frozen=True)
class ProxSetup:
    """A norm together with a 1-strongly-convex prox-function.

    Parameters
    ----------
    norm : callable
        Maps a dual-space vector to a nonnegative scalar.
    prox_value : callable
        The prox-function d(lam), convex, 1-strongly convex w.r.t. ``norm``.
    prox_grad : callable
        A subgradient selection of d, defined on the interior ``domain``.
    domain : str
        Human-readable description of where ``prox_grad`` exists.
    divergence : callable, optional
        Closed form for the Bregman divergence V[zeta](lam). When absent,
        :func:`bregman` falls back to the defining three-term formula.
    """

    norm: Callable[[np.ndarray], float]
    prox_value: Callable[[np.ndarray], float]
    prox_grad: Callable[[np.ndarray], np.ndarray]
    domain: str = "R^n"
    divergence: Callable[[np.ndarray, np.ndarray], float] | None = None


def _half_sq_norm(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    return 0.5 * float(v @ v)


@dataclass(frozen=True)
class EuclideanSetup(ProxSetup):
    """Euclidean setup: d(lam) = 0.5*||lam||_2^2, V[zeta](lam) = 0.5*||lam-zeta||_2^2."""

    dimension: int = 0
    norm: Callable[[np.ndarray], float] = field(
        default=lambda v: float(np.linalg.norm(v)))
    prox_value: Callable[[np.ndarray], float] = field(default=_half_sq_norm)
    prox_grad: Callable[[np.ndarray], np.ndarray] = field(
        default=lambda v: np.asarray(v, dtype=float))
    divergence: Callable[[np.ndarray, np.ndarray], float] | None = field(
        default=lambda zeta, lam: _half_sq_norm(np.asarray(lam, float) - np.asarray(zeta, float)))

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be positive, got {self.dimension}")


def euclidean_setup(dimension: int) -> EuclideanSetup:
    return EuclideanSetup(dimension=dimension)


def bregman(setup: ProxSetup, zeta: np.ndarray, lam: np.ndarray) -> float:
    """Bregman divergence V[zeta](lam) = d(lam) - d(zeta) - <grad d(zeta), lam - zeta>.

    Nonnegative, and >= 0.5*||lam - zeta||^2 by 1-strong convexity of d.
    Uses the setup's closed form when one is available (the generic formula
    cancels catastrophically for large offsets).
    """
    zeta = np.asarray(zeta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if zeta.shape != lam.shape:
        raise DimensionMismatchError(
            f"zeta has shape {zeta.shape}, lambda has shape {lam.shape}")
    if setup.divergence is not None:
        return float(setup.divergence(zeta, lam))
    diff = lam - zeta
    return float(setup.prox_value(lam) - setup.prox_value(zeta)
                 - np.dot(setup.prox_grad(zeta), diff))
