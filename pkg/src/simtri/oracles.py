"""Dual oracles for entropy-regularized transport and entropy-linear programs.

Both applications admit a closed-form inner maximizer, so the dual objective,
its gradient and the primal reconstruction are all explicit. Every
exponential goes through a log-domain form with max-subtraction; overflow
that survives stabilization raises instead of propagating infinities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, xlogy

from .astm import SmoothObjectiveOracle
from .errors import DimensionMismatchError, OracleOverflowError
from .pdastm import ConstrainedProblem, DualPoint

# exp() overflows IEEE doubles just above 709; stay under with headroom
_EXP_CEILING = 700.0


@dataclass(frozen=True)
class TransportInstance:
    """Entropy-regularized transport data: cost matrix, marginals, gamma."""

    cost: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    gamma: float

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
            raise DimensionMismatchError(f"cost must be square, got {cost.shape}")
        p = cost.shape[0]
        if mu.shape != (p,) or nu.shape != (p,):
            raise DimensionMismatchError(
                f"marginals must have length {p}, got {mu.shape} and {nu.shape}")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ValueError("cost entries must be finite and nonnegative")
        if np.any(mu < 0) or np.any(nu < 0):
            raise ValueError("marginals must be nonnegative")
        for name, v in (("mu", mu), ("nu", nu)):
            if abs(float(v.sum()) - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1 within 1e-12, got {v.sum()!r}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def p(self) -> int:
        return self.cost.shape[0]

    def marginal_vector(self) -> np.ndarray:
        """Right-hand side of the stacked row/column-sum constraints."""
        return np.concatenate([self.mu, self.nu])

    def objective(self, plan: np.ndarray) -> float:
        """gamma * sum(x log x) + <cost, x>, with 0 log 0 = 0."""
        plan = np.asarray(plan, dtype=float)
        return float(self.gamma * xlogy(plan, plan).sum() + (self.cost * plan).sum())


def _potentials(inst: TransportInstance, lam) -> tuple[np.ndarray, np.ndarray]:
    vec = lam.vector() if isinstance(lam, DualPoint) else np.asarray(lam, dtype=float)
    if vec.shape != (2 * inst.p,):
        raise DimensionMismatchError(
            f"dual vector must have length {2 * inst.p}, got {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("dual potentials must be finite")
    return vec[:inst.p], vec[inst.p:]


def _log_plan(inst: TransportInstance, lam) -> np.ndarray:
    row, col = _potentials(inst, lam)
    return -1.0 - (inst.cost + row[:, None] + col[None, :]) / inst.gamma


def _guard_exponent(inst: TransportInstance, max_exponent: float) -> None:
    if max_exponent > _EXP_CEILING:
        raise OracleOverflowError(
            f"transport oracle overflow: max exponent {max_exponent:.1f} at "
            f"gamma={inst.gamma:g} exceeds the double-precision range")


def rot_primal_from_dual(inst: TransportInstance, lam) -> np.ndarray:
    """Inner-problem maximizer: x_ij = exp(-1 - (c_ij + r_i + s_j) / gamma).

    Strictly positive; computed from the log-domain plan with an exponent
    guard so overflow is reported rather than returned as inf.
    """
    log_plan = _log_plan(inst, lam)
    _guard_exponent(inst, float(log_plan.max()))
    return np.exp(log_plan)


def rot_dual_value(inst: TransportInstance, lam) -> float:
    """Dual objective <lam, (mu; nu)> + gamma * total plan mass.

    The mass equals the inner maximum, evaluated via log-sum-exp with
    max-subtraction.
    """
    row, col = _potentials(inst, lam)
    log_plan = _log_plan(inst, lam)
    log_mass = float(logsumexp(log_plan))
    _guard_exponent(inst, log_mass)
    return float(row @ inst.mu + col @ inst.nu) + inst.gamma * np.exp(log_mass)


def rot_dual_gradient(inst: TransportInstance, lam) -> np.ndarray:
    """Gradient (mu - X(lam) e; nu - X(lam)^T e), reusing the stabilized plan."""
    plan = rot_primal_from_dual(inst, lam)
    return np.concatenate([inst.mu - plan.sum(axis=1), inst.nu - plan.sum(axis=0)])


def rot_lipschitz_bound(inst: TransportInstance) -> float:
    """Global upper bound 2 / gamma on the dual gradient's Lipschitz constant.

    Each plan coordinate feeds exactly two of the stacked row/column-sum
    constraints, so the constraint operator has l1->l2 norm sqrt(2). The
    bound can be far above the local curvature; it is only a seed and a test
    ceiling, never required for correctness.
    """
    return 2.0 / inst.gamma


def _require_positive_marginals(inst: TransportInstance) -> None:
    if np.any(inst.mu == 0) or np.any(inst.nu == 0):
        raise ValueError(
            "zero marginal entries push the dual potentials to -inf; smooth "
            "the marginals first (datagen.random_images_marginals with "
            "smoothing > 0, or an equivalent floor)")


def rot_dual_oracle(inst: TransportInstance) -> SmoothObjectiveOracle:
    """First-order oracle for the transport dual (equality block only)."""
    _require_positive_marginals(inst)
    b = inst.marginal_vector()

    def value_and_gradient(lam):
        plan = rot_primal_from_dual(inst, lam)
        lam = np.asarray(lam, dtype=float)
        val = float(lam @ b) + inst.gamma * float(plan.sum())
        grad = b - np.concatenate([plan.sum(axis=1), plan.sum(axis=0)])
        return val, grad

    return SmoothObjectiveOracle(
        value=lambda lam: rot_dual_value(inst, lam),
        gradient=lambda lam: rot_dual_gradient(inst, lam),
        value_and_gradient=value_and_gradient,
    )


def transport_problem(inst: TransportInstance) -> ConstrainedProblem:
    """Primal-dual view of the transport instance (no cone block)."""
    _require_positive_marginals(inst)
    b1 = inst.marginal_vector()

    def dual_value(lam, plan):
        total = float(np.asarray(plan).sum())
        if not np.isfinite(total):
            raise OracleOverflowError(
                f"transport plan mass overflowed at gamma={inst.gamma:g}")
        return float(np.asarray(lam, dtype=float) @ b1) + inst.gamma * total

    return ConstrainedProblem(
        inner_solver=lambda lam: rot_primal_from_dual(inst, lam),
        objective=inst.objective,
        a1=lambda plan: np.concatenate([plan.sum(axis=1), plan.sum(axis=0)]),
        b1=b1,
        gamma=inst.gamma,
        dual_value=dual_value,
    )


# -- entropy-linear programming ---------------------------------------------

@dataclass(frozen=True)
class ElpInstance:
    """Relative-entropy objective over the simplex under Ax = b."""

    A: np.ndarray
    b: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "xi", xi)
        if A.ndim != 2:
            raise DimensionMismatchError("A must be a matrix")
        if b.shape != (A.shape[0],) or xi.shape != (A.shape[1],):
            raise DimensionMismatchError(
                f"shapes inconsistent: A {A.shape}, b {b.shape}, xi {xi.shape}")
        if np.any(xi <= 0):
            raise ValueError("reference measure xi must be strictly positive")

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(xlogy(x, x / self.xi).sum())


def elp_primal_from_dual(inst: ElpInstance, lam: np.ndarray) -> np.ndarray:
    """Simplex maximizer x_i proportional to xi_i * exp(-[A^T lam]_i)."""
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)):
        raise ValueError("dual vector must be finite")
    z = np.log(inst.xi) - inst.A.T @ lam
    return np.exp(z - logsumexp(z))


def elp_dual_oracle(inst: ElpInstance) -> SmoothObjectiveOracle:
    """Oracle with value <lam, b> + log sum_i xi_i exp(-[A^T lam]_i) and
    gradient b - A x(lam)."""
    log_xi = np.log(inst.xi)

    def value(lam):
        lam = np.asarray(lam, dtype=float)
        return float(lam @ inst.b + logsumexp(log_xi - inst.A.T @ lam))

    def gradient(lam):
        return inst.b - inst.A @ elp_primal_from_dual(inst, lam)

    def value_and_gradient(lam):
        lam = np.asarray(lam, dtype=float)
        z = log_xi - inst.A.T @ lam
        lse = float(logsumexp(z))
        x = np.exp(z - lse)
        return float(lam @ inst.b) + lse, inst.b - inst.A @ x

    return SmoothObjectiveOracle(value=value, gradient=gradient,
                                 value_and_gradient=value_and_gradient)


def elp_problem(inst: ElpInstance) -> ConstrainedProblem:
    """Primal-dual view of the entropy-linear program (no cone block).

    The relative entropy is 1-strongly convex on the simplex.
    """
    oracle = elp_dual_oracle(inst)
    return ConstrainedProblem(
        inner_solver=lambda lam: elp_primal_from_dual(inst, lam),
        objective=inst.objective,
        a1=lambda x: inst.A @ x,
        b1=inst.b,
        gamma=1.0,
        dual_value=lambda lam, x: oracle.value(lam),
    )


# -- instance serialization ---------------------------------------------------

def save_instance(inst: TransportInstance, out_dir: str | Path,
                  normalization: str = "none", stem: str = "instance") -> Path:
    """Write cost/marginal CSV files plus a JSON manifest; returns the
    manifest path.

    CSV files are headerless, row-major, decimal. ``normalization`` records
    whether the cost matrix was mean-normalized before saving ("mean") or
    left as generated ("none").
    """
    if normalization not in ("mean", "none"):
        raise ValueError(f"normalization must be 'mean' or 'none', got {normalization!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = {k: f"{stem}_{k}.csv" for k in ("cost", "mu", "nu")}
    np.savetxt(out_dir / names["cost"], inst.cost, delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / names["mu"], inst.mu, delimiter=",", fmt="%.17g")
    np.savetxt(out_dir / names["nu"], inst.nu, delimiter=",", fmt="%.17g")
    manifest = {
        "p": inst.p,
        "gamma": inst.gamma,
        "cost_file": names["cost"],
        "mu_file": names["mu"],
        "nu_file": names["nu"],
        "normalization": normalization,
    }
    manifest_path = out_dir / f"{stem}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def load_instance(manifest_path: str | Path) -> TransportInstance:
    """Read an instance saved by :func:`save_instance`."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    base = manifest_path.parent
    cost = np.loadtxt(base / manifest["cost_file"], delimiter=",", ndmin=2)
    mu = np.loadtxt(base / manifest["mu_file"], delimiter=",")
    nu = np.loadtxt(base / manifest["nu_file"], delimiter=",")
    inst = TransportInstance(cost=cost, mu=np.atleast_1d(mu),
                             nu=np.atleast_1d(nu), gamma=float(manifest["gamma"]))
    if inst.p != int(manifest["p"]):
        raise ValueError(
            f"manifest p={manifest['p']} disagrees with cost shape {inst.cost.shape}")
    return inst
