"""Numerical verification of the error-sum sandwich inequalities.

The harness computes the continuous squared approximation error of a fitted
filter, the per-slice errors, and the construction error of a one-layer
linear graph convolution, then evaluates every side of the two sandwich
inequalities. Slicing here closes the partition at the domain endpoint 2,
so the slices genuinely sum to the filter everywhere the error integral
runs; without that closure the upper bounds lose their footing whenever the
largest eigenvalue falls short of 2.

Checks are reporting, not assertions: each side is recorded with its slack,
under both the squared-error convention (primary) and the literal
unsquared-norm reading, plus the discrete-norm variant of the upper bound
on the construction error, which is the only form that follows from
submultiplicativity alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, RegularizationViolated
from .filters import PolyFit, TargetFilter, lse_fit_continuous, slice_errors
from .graph import EigenSystem


@dataclass(frozen=True)
class SandwichCheck:
    """One evaluated inequality side: holds (with tolerance) plus slack
    (right-hand side minus left-hand side)."""

    ok: bool
    slack: float
    lhs: float
    rhs: float


def _check(lhs: float, rhs: float, rel_tol: float = 1e-9) -> SandwichCheck:
    scale = max(abs(lhs), abs(rhs), 1.0)
    return SandwichCheck(
        ok=bool(lhs <= rhs + rel_tol * scale),
        slack=float(rhs - lhs),
        lhs=float(lhs),
        rhs=float(rhs),
    )


@dataclass(frozen=True)
class LemmaReport:
    """Slice-error sandwich for one (filter, eigenvalues, basis, D) case."""

    epsilon: float
    epsilon_slices: np.ndarray
    left: SandwichCheck
    right: SandwichCheck
    left_unsquared: SandwichCheck
    right_unsquared: SandwichCheck

    @property
    def sum_slices(self) -> float:
        return float(np.sum(self.epsilon_slices))

    @property
    def sum_sqrt_slices_sq(self) -> float:
        return float(np.sum(np.sqrt(self.epsilon_slices)) ** 2)

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "epsilon_slices": [float(e) for e in self.epsilon_slices],
            "sum_slices": self.sum_slices,
            "sum_sqrt_slices_sq": self.sum_sqrt_slices_sq,
            "lemma1_left_ok": self.left.ok,
            "lemma1_right_ok": self.right.ok,
            "lemma1_left_slack": self.left.slack,
            "lemma1_right_slack": self.right.slack,
            "unsquared": {
                "lemma1_left_ok": self.left_unsquared.ok,
                "lemma1_right_ok": self.right_unsquared.ok,
                "lemma1_left_slack": self.left_unsquared.slack,
                "lemma1_right_slack": self.right_unsquared.slack,
            },
        }


@dataclass(frozen=True)
class BoundsReport:
    """Full report for one construction-error case."""

    epsilon: float
    epsilon_discrete_norm: float
    epsilon_slices: np.ndarray
    xi: float
    xi_squared: float
    delta_X: float
    delta_W: float
    r: float
    norm_X: float
    lemma: LemmaReport
    thm1_left: SandwichCheck
    thm1_right: SandwichCheck
    thm1_left_unsquared: SandwichCheck
    thm1_right_unsquared: SandwichCheck
    thm1_right_discrete: SandwichCheck
    discrete_continuous_gap: bool

    def to_dict(self) -> dict:
        d = {
            "epsilon": self.epsilon,
            "epsilon_discrete_norm": self.epsilon_discrete_norm,
            "epsilon_slices": [float(e) for e in self.epsilon_slices],
            "xi": self.xi,
            "xi_squared": self.xi_squared,
            "delta_X": self.delta_X,
            "delta_W": self.delta_W,
            "r": self.r,
            "norm_X": self.norm_X,
            "thm1_left_ok": self.thm1_left.ok,
            "thm1_right_ok": self.thm1_right.ok,
            "thm1_left_slack": self.thm1_left.slack,
            "thm1_right_slack": self.thm1_right.slack,
            "thm1_right_discrete_ok": self.thm1_right_discrete.ok,
            "thm1_right_discrete_slack": self.thm1_right_discrete.slack,
            "unsquared": {
                "thm1_left_ok": self.thm1_left_unsquared.ok,
                "thm1_right_ok": self.thm1_right_unsquared.ok,
                "thm1_left_slack": self.thm1_left_unsquared.slack,
                "thm1_right_slack": self.thm1_right_unsquared.slack,
            },
            "discrete_continuous_gap": self.discrete_continuous_gap,
        }
        d["lemma1"] = self.lemma.to_dict()
        return d

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def construction_error(
    eig: EigenSystem,
    fit: PolyFit,
    filt: TargetFilter,
    X: np.ndarray,
    W: np.ndarray,
) -> float:
    """Frobenius norm of U diag(T(lambda) - f(lambda)) U^T X W."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if W.ndim == 1:
        W = W[:, None]
    if X.shape[0] != eig.n:
        raise DimensionMismatch(f"X has {X.shape[0]} rows, expected {eig.n}")
    if W.shape[0] != X.shape[1]:
        raise DimensionMismatch(
            f"W has {W.shape[0]} rows, expected {X.shape[1]}"
        )
    lam = eig.eigenvalues
    gap = fit(lam) - np.asarray(filt(lam), dtype=np.float64)
    U = eig.eigenvectors
    M = (U * gap) @ (U.T @ (X @ W))
    return float(np.linalg.norm(M, ord="fro"))


def verify_lemma1(
    filt: TargetFilter,
    eigenvalues: np.ndarray,
    basis: str,
    D: int,
    trig: tuple[int, float] | None = None,
) -> LemmaReport:
    """Evaluate sum eps_s <= eps <= (sum sqrt(eps_s))^2 on one case.

    Failures are data (recorded per side), never exceptions.
    """
    eps = lse_fit_continuous(basis, D, filt, trig=trig).fit_error
    eps_s = slice_errors(filt, eigenvalues, basis, D, trig=trig, closure=True)
    s_sum = float(np.sum(eps_s))
    s_rt = float(np.sum(np.sqrt(eps_s)) ** 2)
    # literal reading with unsquared errors e = sqrt(eps)
    e = float(np.sqrt(eps))
    e_sum = float(np.sum(np.sqrt(eps_s)))
    e_rt = float(np.sum(eps_s**0.25) ** 2)
    return LemmaReport(
        epsilon=float(eps),
        epsilon_slices=eps_s,
        left=_check(s_sum, eps),
        right=_check(eps, s_rt),
        left_unsquared=_check(e_sum, e),
        right_unsquared=_check(e, e_rt),
    )


def verify_theorem1(
    eig: EigenSystem,
    filt: TargetFilter,
    basis: str,
    D: int,
    X: np.ndarray,
    W: np.ndarray,
    r: float,
    trig: tuple[int, float] | None = None,
) -> BoundsReport:
    """Full construction-error sandwich for one configuration.

    Requires ||W||_F <= r (the regularization radius the upper bound is
    stated under).
    """
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    norm_W = float(np.linalg.norm(W))
    if norm_W > r * (1.0 + 1e-12):
        raise RegularizationViolated(f"||W||_F = {norm_W:g} exceeds r = {r:g}")

    fit = lse_fit_continuous(basis, D, filt, trig=trig)
    lemma = verify_lemma1(filt, eig.eigenvalues, basis, D, trig=trig)
    xi = construction_error(eig, fit, filt, X, W)

    lam = eig.eigenvalues
    eps_disc = float(np.linalg.norm(fit(lam) - np.asarray(filt(lam))))
    norm_X = float(np.linalg.norm(X))
    delta_X = float(np.linalg.svd(X, compute_uv=False).min()) if X.size else 0.0
    delta_W = float(np.linalg.svd(W, compute_uv=False).min()) if W.size else 0.0

    eps_s = lemma.epsilon_slices
    s_sum = float(np.sum(eps_s))
    s_rt = float(np.sum(np.sqrt(eps_s)) ** 2)
    e_sum = float(np.sum(np.sqrt(eps_s)))
    e_rt = float(np.sum(eps_s**0.25) ** 2)

    return BoundsReport(
        epsilon=lemma.epsilon,
        epsilon_discrete_norm=eps_disc,
        epsilon_slices=eps_s,
        xi=xi,
        xi_squared=xi * xi,
        delta_X=delta_X,
        delta_W=delta_W,
        r=float(r),
        norm_X=norm_X,
        lemma=lemma,
        thm1_left=_check(delta_X * delta_W * s_sum, xi),
        thm1_right=_check(xi, r * norm_X * s_rt),
        thm1_left_unsquared=_check(delta_X * delta_W * e_sum, xi),
        thm1_right_unsquared=_check(xi, r * norm_X * e_rt),
        thm1_right_discrete=_check(xi, r * eps_disc * norm_X),
        discrete_continuous_gap=bool(xi <= 1e-12 and s_sum > 1e-12),
    )
