"""Truncated trigonometric filters and their power-series decomposition.

The filter is sum_k [alpha_k sin(k w x) + beta_k cos(k w x)] with base
frequency w in (0, pi) and truncation order K. Each trigonometric term is
rewritten as a degree-D Maclaurin polynomial; the coefficient tables Gamma
(sine rows) and Theta (cosine rows) collapse the whole filter into a single
power series sum_d x^d (alpha . Gamma[:, d] + beta . Theta[:, d]), which is
what the graph convolution actually evaluates.

Accuracy note: a degree-D Maclaurin polynomial of sin/cos is only faithful
to the transcendental function while the argument stays small; the product
K*w in roughly (0.6*pi, 1.2*pi) is the recommended operating region when
trig fidelity matters. The power series itself is always well defined and
is treated as the ground-truth filter by the convolution path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .filters import TargetFilter, eval_target, quad_grid


@dataclass(frozen=True)
class TrigParams:
    """Coefficients (alpha, beta) of a truncated trigonometric filter."""

    K: int
    omega: float
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.omega < np.pi:
            raise DomainError(f"omega={self.omega} not in (0, pi)")
        if self.K < 0:
            raise DomainError(f"K={self.K} must be >= 0")
        if len(self.alpha) != self.K + 1 or len(self.beta) != self.K + 1:
            raise DomainError("alpha and beta must have length K + 1")

    @classmethod
    def identity(cls, K: int, omega: float) -> "TrigParams":
        """beta_0 = 1, everything else 0: the constant-1 (identity) filter."""
        alpha = np.zeros(K + 1)
        beta = np.zeros(K + 1)
        beta[0] = 1.0
        return cls(K=K, omega=omega, alpha=alpha, beta=beta)


@dataclass(frozen=True)
class TaylorTables:
    """Maclaurin coefficient tables, shape (K+1, D+1).

    Gamma[k, d] is the x^d coefficient of sin(k w x): zero for even d,
    (-1)^((d-1)/2) (k w)^d / d! for odd d. Theta[k, d] is the cos analogue:
    zero for odd d, (-1)^(d/2) (k w)^d / d! for even d.
    """

    K: int
    D: int
    omega: float
    Gamma: np.ndarray
    Theta: np.ndarray


def taylor_tables(K: int, omega: float, D: int) -> TaylorTables:
    if not 0.0 < omega < np.pi:
        raise DomainError(f"omega={omega} not in (0, pi)")
    if K < 0 or D < 0:
        raise DomainError("K and D must be >= 0")
    d = np.arange(D + 1)
    k = np.arange(K + 1)
    inv_fact = np.array([1.0 / math.factorial(int(i)) for i in d])
    arg = np.power.outer(k * omega, d)  # (K+1, D+1): (k w)^d, with 0^0 = 1
    gamma_sign = np.where(d % 2 == 1, (-1.0) ** ((d - 1) // 2), 0.0)
    theta_sign = np.where(d % 2 == 0, (-1.0) ** (d // 2), 0.0)
    Gamma = arg * inv_fact * gamma_sign
    Theta = arg * inv_fact * theta_sign
    Gamma[0, :] = 0.0  # sin(0) == 0 for every power
    Theta[0, :] = 0.0
    Theta[0, 0] = 1.0  # cos(0) == 1
    return TaylorTables(K=K, D=D, omega=omega, Gamma=Gamma, Theta=Theta)


def effective_coefficients(params: TrigParams, tables: TaylorTables) -> np.ndarray:
    """Power-series coefficients c_d = alpha . Gamma[:, d] + beta . Theta[:, d].

    Accumulated in extended precision, ascending k, so the result is
    bit-stable across runs.
    """
    if tables.K != params.K or tables.omega != params.omega:
        raise DomainError("tables were generated for different (K, omega)")
    acc = np.zeros(tables.D + 1, dtype=np.longdouble)
    for k in range(params.K + 1):
        acc += np.longdouble(params.alpha[k]) * tables.Gamma[k].astype(np.longdouble)
        acc += np.longdouble(params.beta[k]) * tables.Theta[k].astype(np.longdouble)
    return acc.astype(np.float64)


def eval_trig_exact(params: TrigParams, x) -> np.ndarray | float:
    """Transcendental evaluation of the truncated trigonometric filter."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 2.0):
        raise DomainError("filter argument outside [0, 2]")
    k = np.arange(params.K + 1)
    ang = np.multiply.outer(arr, k * params.omega)
    out = np.sin(ang) @ params.alpha + np.cos(ang) @ params.beta
    return float(out) if arr.ndim == 0 else out


def eval_trig_tpd(params: TrigParams, tables: TaylorTables, x) -> np.ndarray | float:
    """Evaluate the degree-D power-series form of the filter."""
    c = effective_coefficients(params, tables)
    arr = np.asarray(x, dtype=np.float64)
    out = np.polynomial.polynomial.polyval(arr, c)
    return float(out) if arr.ndim == 0 else out


def taylor_remainder_bound(K: int, omega: float, D: int, x_max: float = 2.0) -> float:
    """Lagrange remainder bound (K w x_max)^(D+1) / (D+1)! on the deviation
    between the exact and power-series forms, per trigonometric term; the
    filter-level bound multiplies by the coefficient l1 mass."""
    return (K * omega * x_max) ** (D + 1) / math.factorial(D + 1)


# ---------------------------------------------------------------------------
# Fourier coefficients and decay
# ---------------------------------------------------------------------------


def fourier_coeffs(evaluator, omega: float, k_max: int,
                   breakpoints=()) -> tuple[np.ndarray, np.ndarray]:
    """Projection coefficients of a function onto the trigonometric system
    with base frequency omega:

        alpha_k = (w/pi) * int_0^{2 pi / w} f(x) sin(k w x) dx
        beta_k  = (w/pi) * int_0^{2 pi / w} f(x) cos(k w x) dx

    ``evaluator`` must accept any x in [0, 2 pi / w]. Quadrature panels are
    narrow enough to resolve the k_max-th oscillation.
    """
    if not 0.0 < omega < np.pi:
        raise DomainError(f"omega={omega} not in (0, pi)")
    period = 2.0 * np.pi / omega
    width = min(0.02, np.pi * omega / (10.0 * max(k_max, 1)))
    grid = quad_grid(0.0, period, breakpoints=breakpoints, max_width=width)
    fvals = np.asarray(evaluator(grid.nodes), dtype=np.float64)
    wf = grid.weights * fvals
    k = np.arange(k_max + 1)
    ang = np.multiply.outer(k * omega, grid.nodes)  # (k_max+1, N)
    alpha = (omega / np.pi) * (np.sin(ang) @ wf)
    beta = (omega / np.pi) * (np.cos(ang) @ wf)
    return alpha, beta


def zero_extended(filt: TargetFilter):
    """Evaluator equal to the filter on [0, 2] and 0 beyond, for integrating
    over a period longer than the filter domain."""

    def ev(x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        inside = (x >= 0.0) & (x <= 2.0)
        if inside.any():
            out[inside] = eval_target(filt, x[inside])
        return out

    return ev


def filter_fourier_coeffs(filt: TargetFilter, omega: float, k_max: int):
    """Fourier coefficients of a [0, 2] filter, zero-extended across the
    remainder of the period (the period 2 pi / omega exceeds 2 whenever
    omega < pi)."""
    period = 2.0 * np.pi / omega
    bps = tuple(filt.breakpoints)
    if period > 2.0:
        bps = bps + (2.0,)  # zero extension kinks the integrand at x = 2
        return fourier_coeffs(zero_extended(filt), omega, k_max, breakpoints=bps)
    return fourier_coeffs(lambda x: eval_target(filt, x), omega, k_max, breakpoints=bps)


@dataclass(frozen=True)
class DecayStats:
    """Tail maxima of a coefficient sequence: m_j = max_{k >= j} of
    max(|alpha_k|, |beta_k|); non-increasing by construction."""

    tail_max: np.ndarray
    ratio_half: float

    @property
    def k_max(self) -> int:
        return len(self.tail_max) - 1


def decay_report(alpha: np.ndarray, beta: np.ndarray) -> DecayStats:
    mags = np.maximum(np.abs(np.asarray(alpha)), np.abs(np.asarray(beta)))
    tail = np.maximum.accumulate(mags[::-1])[::-1]
    m0 = tail[0]
    half = tail[len(tail) // 2]
    ratio = float(half / m0) if m0 > 0 else 0.0
    return DecayStats(tail_max=tail, ratio_half=ratio)


# ---------------------------------------------------------------------------
# Parameter checkpoints
# ---------------------------------------------------------------------------


def save_trig_params(params: TrigParams, path) -> None:
    """Key-value text format; float repr round-trips exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"K={params.K}\n")
        fh.write(f"omega={params.omega!r}\n")
        fh.write("alpha=" + ",".join(repr(float(a)) for a in params.alpha) + "\n")
        fh.write("beta=" + ",".join(repr(float(b)) for b in params.beta) + "\n")


def load_trig_params(path) -> TrigParams:
    fields = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    try:
        K = int(fields["K"])
        omega = float(fields["omega"])
        alpha = np.array([float(v) for v in fields["alpha"].split(",")])
        beta = np.array([float(v) for v in fields["beta"].split(",")])
    except (KeyError, ValueError) as exc:
        raise DomainError(f"bad trig parameter file {path}: {exc}") from exc
    return TrigParams(K=K, omega=omega, alpha=alpha, beta=beta)
