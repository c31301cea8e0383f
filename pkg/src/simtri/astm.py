"""Adaptive similar-triangles accelerated gradient method.

Minimizes a smooth convex function over a closed convex set using one prox
step per iteration and a doubling line search that tracks a local estimate
``M_k`` of the gradient's Lipschitz constant. The non-adaptive variant (every
step taken with a fixed global constant) ships as the ablation baseline.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Union

import numpy as np

from .errors import (
    BudgetExhaustedError,
    DimensionMismatchError,
    NonsmoothnessError,
    SolverError,
    UnsupportedConfigurationError,
)
from .prox import EuclideanSetup, ProxSetup

DEFAULT_M_CEILING = 1e18
DEFAULT_ITERATION_CAP = 10_000_000


@dataclass
class SmoothObjectiveOracle:
    """First-order oracle for a smooth convex objective.

    Parameters
    ----------
    value : callable
        lam -> phi(lam).
    gradient : callable
        lam -> grad phi(lam).
    value_and_gradient : callable, optional
        lam -> (phi(lam), grad phi(lam)); supplied when a joint evaluation
        is cheaper than two separate ones. One invocation counts as a single
        oracle call either way.
    project_argmin_model : callable, optional
        (zeta, alpha, grad) -> argmin over the feasible set of
        V[zeta](lam) + alpha*<grad, lam>. Required when the feasible set is
        not the whole space; for unconstrained Euclidean problems the solver
        uses the explicit step zeta - alpha*grad.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    value_and_gradient: Callable[[np.ndarray], tuple[float, np.ndarray]] | None = None
    project_argmin_model: Callable[[np.ndarray, float, np.ndarray], np.ndarray] | None = None

    def eval_both(self, lam: np.ndarray) -> tuple[float, np.ndarray]:
        if self.value_and_gradient is not None:
            val, grad = self.value_and_gradient(lam)
        else:
            val, grad = self.value(lam), self.gradient(lam)
        return float(val), np.asarray(grad, dtype=float)


class HistoryEntry(NamedTuple):
    alpha: float
    lam: np.ndarray
    value: float
    grad: np.ndarray


@dataclass
class AstmState:
    """Full iterate state of one solver run."""

    k: int
    C: float
    alpha: float
    L: float
    eta: np.ndarray
    zeta: np.ndarray
    lam: np.ndarray
    oracle_calls: int = 0
    history: list[HistoryEntry] | None = None
    M: float = math.nan          # last accepted curvature estimate
    phi_eta: float = math.nan    # phi(eta_k) from the last accepted trial


def initial_state(lambda0: np.ndarray, L0: float, keep_history: bool = False) -> AstmState:
    if L0 <= 0:
        raise ValueError(f"L0 must be positive, got {L0}")
    lam0 = np.asarray(lambda0, dtype=float).copy()
    return AstmState(k=0, C=0.0, alpha=0.0, L=float(L0),
                     eta=lam0.copy(), zeta=lam0.copy(), lam=lam0,
                     history=[] if keep_history else None)


# -- stopping rules ---------------------------------------------------------

@dataclass(frozen=True)
class MaxIter:
    """Stop after a fixed number of iterations; no accuracy guarantee."""
    k_max: int

    def __post_init__(self):
        if self.k_max < 0:
            raise ValueError("k_max must be nonnegative")


@dataclass(frozen=True)
class RadiusBound:
    """Stop once R^2 / C_k <= eps; valid when V[zeta_0](lam*) <= R^2."""
    R: float
    eps: float

    def __post_init__(self):
        if self.R <= 0 or self.eps <= 0:
            raise ValueError("R and eps must be positive")


@dataclass(frozen=True)
class LinearizedGap:
    """Stop once the ball-restricted linearized model gap drops below eps."""
    R: float
    eps: float

    def __post_init__(self):
        if self.R < 0 or self.eps <= 0:
            raise ValueError("R must be nonnegative and eps positive")


@dataclass(frozen=True)
class External:
    """Stop when the callback, given the current state, returns True."""
    should_stop: Callable[[AstmState], bool]


StoppingRule = Union[MaxIter, RadiusBound, LinearizedGap, External]


@dataclass(frozen=True)
class AstmTraceRecord:
    k: int
    C: float
    alpha: float
    M: float
    phi_eta: float
    oracle_calls: int
    wall_nanos: int


# -- elementary operations --------------------------------------------------

def largest_root(C_k: float, M_k: float) -> float:
    """Larger root of M_k*alpha^2 - alpha - C_k = 0.

    Evaluated as (1 + sqrt(1 + 4*M_k*C_k)) / (2*M_k), which is free of
    cancellation (the smaller root is not).
    """
    if M_k <= 0:
        raise ValueError(f"M_k must be positive, got {M_k}")
    if C_k < 0:
        raise ValueError(f"C_k must be nonnegative, got {C_k}")
    return (1.0 + math.sqrt(1.0 + 4.0 * M_k * C_k)) / (2.0 * M_k)


def triangle_extrapolate(zeta_k: np.ndarray, eta_k: np.ndarray, alpha: float,
                         C_k: float, C_next: float) -> np.ndarray:
    """Point on the segment [zeta_k, eta_k] with weights alpha and C_k."""
    zeta_k = np.asarray(zeta_k, dtype=float)
    eta_k = np.asarray(eta_k, dtype=float)
    if zeta_k.shape != eta_k.shape:
        raise DimensionMismatchError(
            f"zeta has shape {zeta_k.shape}, eta has shape {eta_k.shape}")
    if C_next <= 0:
        raise ValueError(f"C_next must be positive, got {C_next}")
    return (alpha * zeta_k + C_k * eta_k) / C_next


def model_prox_step(oracle: SmoothObjectiveOracle, setup: ProxSetup,
                    zeta_k: np.ndarray, alpha: float, lambda_next: np.ndarray,
                    grad: np.ndarray | None = None) -> np.ndarray:
    """Minimizer of V[zeta_k](lam) + alpha * <grad phi(lambda_next), lam>.

    For the unconstrained Euclidean setup this is zeta_k - alpha*grad; a
    constrained or non-Euclidean feasible set must supply the argmin through
    ``oracle.project_argmin_model``.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    zeta_k = np.asarray(zeta_k, dtype=float)
    g = np.asarray(grad if grad is not None else oracle.gradient(lambda_next), dtype=float)
    if g.shape != zeta_k.shape:
        raise DimensionMismatchError(
            f"gradient has shape {g.shape}, zeta has shape {zeta_k.shape}")
    if oracle.project_argmin_model is not None:
        try:
            return np.asarray(oracle.project_argmin_model(zeta_k, alpha, g), dtype=float)
        except Exception as exc:  # noqa: BLE001 - rewrap with context
            raise SolverError(f"model argmin projection failed: {exc}") from exc
    if not isinstance(setup, EuclideanSetup):
        raise UnsupportedConfigurationError(
            "non-Euclidean setups need oracle.project_argmin_model")
    return zeta_k - alpha * g


class IterationInfo(NamedTuple):
    alpha: float
    M: float
    lam: np.ndarray
    grad: np.ndarray
    phi_lam: float
    phi_eta: float
    trials: int


def _acceptance_slack(phi_lam: float, phi_eta: float, inner: float) -> float:
    # a few ulps of headroom so rounding noise cannot force spurious doublings
    return 1e-14 * (1.0 + abs(phi_lam) + abs(phi_eta) + abs(inner))


def line_search_iteration(oracle: SmoothObjectiveOracle, setup: ProxSetup,
                          state: AstmState, adaptive: bool = True,
                          m_ceiling: float = DEFAULT_M_CEILING) -> tuple[AstmState, IterationInfo]:
    """One outer iteration: doubling line search plus the committed update.

    Each trial evaluates the oracle twice (value+gradient at the trial
    midpoint, value at the trial iterate), doubling ``M`` until the local
    quadratic upper model holds. With ``adaptive=False`` a single trial at
    ``M = L`` is committed unconditionally.
    """
    C_k = state.C
    M = state.L if not adaptive else state.L / 2.0
    calls = state.oracle_calls
    trials = 0
    while True:
        if adaptive:
            M *= 2.0
            if M > m_ceiling:
                raise NonsmoothnessError(
                    f"curvature estimate exceeded ceiling {m_ceiling:g}; "
                    "objective gradient is likely not Lipschitz")
        alpha = largest_root(C_k, M)
        C_next = C_k + alpha
        lam_next = triangle_extrapolate(state.zeta, state.eta, alpha, C_k, C_next)
        phi_lam, g = oracle.eval_both(lam_next)
        calls += 1
        zeta_next = model_prox_step(oracle, setup, state.zeta, alpha, lam_next, grad=g)
        eta_next = (alpha * zeta_next + C_k * state.eta) / C_next
        phi_eta = float(oracle.value(eta_next))
        calls += 1
        trials += 1
        if not adaptive:
            break
        d = eta_next - lam_next
        inner = float(g @ d)
        lhs = phi_eta - phi_lam - inner
        rhs = 0.5 * M * float(d @ d)
        if lhs <= rhs + _acceptance_slack(phi_lam, phi_eta, inner):
            break

    new_state = replace(
        state, k=state.k + 1, C=C_next, alpha=alpha,
        L=(M / 2.0 if adaptive else state.L),
        eta=eta_next, zeta=zeta_next, lam=lam_next,
        oracle_calls=calls, M=M, phi_eta=phi_eta,
        history=state.history,
    )
    if new_state.history is not None:
        new_state.history.append(HistoryEntry(alpha, lam_next, phi_lam, g))
    return new_state, IterationInfo(alpha, M, lam_next, g, phi_lam, phi_eta, trials)


def linearized_gap(history: list[HistoryEntry], setup: ProxSetup, R: float,
                   phi_eta: float, C_k: float, zeta0: np.ndarray) -> float:
    """Gap between phi(eta_k) and the weighted linearized model minimized
    over the Bregman ball {V[zeta0](lam) <= R^2}.

    Only the unconstrained Euclidean setup is supported: there the ball is a
    Euclidean ball of radius sqrt(2)*R around zeta0 and the minimizer of the
    affine model has a closed form.
    """
    if not history:
        raise ValueError("linearized gap needs at least one committed iteration")
    if not isinstance(setup, EuclideanSetup):
        raise UnsupportedConfigurationError(
            "linearized-gap stopping supports only the unconstrained Euclidean setup")
    if C_k <= 0:
        raise ValueError("C_k must be positive")
    zeta0 = np.asarray(zeta0, dtype=float)
    s_lin = 0.0
    s_grad = np.zeros_like(zeta0)
    for entry in history:
        s_lin += entry.alpha * (entry.value - float(entry.grad @ entry.lam))
        s_grad += entry.alpha * entry.grad
    model_min = (s_lin + float(s_grad @ zeta0)
                 - math.sqrt(2.0) * R * float(np.linalg.norm(s_grad))) / C_k
    return float(phi_eta) - model_min


def run_astm(oracle: SmoothObjectiveOracle, setup: ProxSetup, lambda0: np.ndarray,
             L0: float, stop: StoppingRule, adaptive: bool = True,
             max_iter: int = DEFAULT_ITERATION_CAP,
             m_ceiling: float = DEFAULT_M_CEILING,
             keep_history: bool = False,
             trace: list[AstmTraceRecord] | None = None) -> tuple[np.ndarray, AstmState]:
    """Minimize ``oracle`` from ``lambda0`` until ``stop`` triggers.

    Parameters
    ----------
    oracle : SmoothObjectiveOracle
        Objective value/gradient, plus the model argmin when the feasible
        set is constrained.
    setup : ProxSetup
        Prox geometry; the shipped instance is Euclidean.
    lambda0 : array
        Starting point, interior to the prox domain.
    L0 : float
        Initial Lipschitz guess. With ``adaptive=False`` it must be a valid
        global upper bound on the gradient's Lipschitz constant and every
        step uses it unchanged.
    stop : StoppingRule
        MaxIter, RadiusBound, LinearizedGap, or External.
    keep_history : bool
        Retain per-iteration (alpha, lambda, value, gradient) tuples on the
        returned state. The linearized-gap rule is evaluated from running
        sums either way, so the default solver keeps O(1) state.

    Returns
    -------
    (eta, state)
        The output point and the final state with oracle-call counters.
    """
    if isinstance(stop, LinearizedGap) and oracle.project_argmin_model is not None:
        raise UnsupportedConfigurationError(
            "linearized-gap stopping is limited to unconstrained domains; "
            "use a certificate-based rule for constrained runs")
    state = initial_state(lambda0, L0, keep_history=keep_history)
    if isinstance(stop, MaxIter) and stop.k_max == 0:
        return state.eta, state
    zeta0 = state.zeta.copy()
    s_lin = 0.0
    s_grad = np.zeros_like(zeta0)
    t0 = time.perf_counter_ns()
    for _ in range(max_iter):
        state, info = line_search_iteration(oracle, setup, state,
                                            adaptive=adaptive, m_ceiling=m_ceiling)
        if isinstance(stop, LinearizedGap):
            s_lin += info.alpha * (info.phi_lam - float(info.grad @ info.lam))
            s_grad += info.alpha * info.grad
        if trace is not None:
            trace.append(AstmTraceRecord(state.k, state.C, state.alpha, state.M,
                                         state.phi_eta, state.oracle_calls,
                                         time.perf_counter_ns() - t0))
        if _should_stop(stop, state, s_lin, s_grad, zeta0):
            return state.eta, state
    raise BudgetExhaustedError(
        f"stopping rule not triggered within {max_iter} iterations")


def _should_stop(stop: StoppingRule, state: AstmState,
                 s_lin: float, s_grad: np.ndarray, zeta0: np.ndarray) -> bool:
    if isinstance(stop, MaxIter):
        return state.k >= stop.k_max
    if isinstance(stop, RadiusBound):
        return stop.R ** 2 / state.C <= stop.eps
    if isinstance(stop, LinearizedGap):
        model_min = (s_lin + float(s_grad @ zeta0)
                     - math.sqrt(2.0) * stop.R * float(np.linalg.norm(s_grad))) / state.C
        return state.phi_eta - model_min <= stop.eps
    if isinstance(stop, External):
        return bool(stop.should_stop(state))
    raise TypeError(f"unknown stopping rule {stop!r}")
