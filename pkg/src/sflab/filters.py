"""Target filters, function slices, polynomial bases, and least-squares fits.

A filter is a scalar function on [0, 2] (the Laplacian spectrum). Slicing
cuts it at a sorted set of eigenvalues into disjoint pieces whose sum
reproduces the filter on the sliced range; each piece is fitted, zero
extension and all, over the full [0, 2] domain. Both the continuous
(quadrature-weighted) and discrete least-squares errors use the squared
convention throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, UnsortedInput

FILTER_DOMAIN = (0.0, 2.0)

QUAD_ORDER = 16
QUAD_MAX_WIDTH = 0.05

BASIS_NAMES = ("monomial", "chebyshev", "bernstein", "trig_tpd")


# ---------------------------------------------------------------------------
# Target filters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetFilter:
    """A filter mapping on [0, 2].

    ``evaluator`` is vectorized (ndarray -> ndarray). ``breakpoints`` lists
    interior points where the expression changes branch; quadrature panels
    are aligned to them.
    """

    id: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return eval_target(self, x)


def eval_target(filt: TargetFilter, x) -> np.ndarray | float:
    """Evaluate the filter; inputs outside [0, 2] raise DomainError."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and (arr.min() < FILTER_DOMAIN[0] or arr.max() > FILTER_DOMAIN[1]):
        raise DomainError(f"filter argument outside [0, 2]")
    out = np.asarray(filt.evaluator(arr), dtype=np.float64)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def _f1(x):
    return np.exp(-20.0 * (x - 0.5) ** 2) + np.exp(-20.0 * (x - 1.5) ** 2)


def _f2(x):
    base = np.exp(-100.0 * (x - 0.8) ** 2) + np.exp(-100.0 * (x - 1.2) ** 2)
    hump = 0.5 * (1.0 + np.cos(2.0 * np.pi * x))
    outer = (x <= 0.5) | (x >= 1.5)
    return base + np.where(outer, hump, 0.0)


def _f3(x):
    return (
        np.exp(-100.0 * (x - 0.5) ** 2)
        + np.exp(-100.0 * (x - 1.5) ** 2)
        + 1.5 * np.exp(-50.0 * (x - 1.0) ** 2)
    )


def _f4(x):
    return np.exp(-100.0 * x**2) + np.exp(-100.0 * (x - 2.0) ** 2)


def _f5(x):
    return 1.0 - np.exp(-10.0 * x**2)


def _f6(x):
    return np.exp(-10.0 * (x - 0.4) ** 2) + 2.0 * np.exp(-10.0 * (x - 1.5) ** 2)


TARGET_FILTERS: dict[str, TargetFilter] = {
    "f1": TargetFilter("f1", _f1),
    "f2": TargetFilter("f2", _f2, breakpoints=(0.5, 1.5)),
    "f3": TargetFilter("f3", _f3),
    "f4": TargetFilter("f4", _f4),
    "f5": TargetFilter("f5", _f5),
    "f6": TargetFilter("f6", _f6),
}


def get_filter(filter_id: str) -> TargetFilter:
    try:
        return TARGET_FILTERS[filter_id]
    except KeyError:
        raise DomainError(
            f"unknown filter {filter_id!r}; choose from {sorted(TARGET_FILTERS)}"
        ) from None


def filter_from_callable(fn, filter_id="custom", breakpoints=()) -> TargetFilter:
    return TargetFilter(filter_id, lambda x: np.asarray(fn(x), dtype=np.float64),
                        tuple(breakpoints))


def load_custom_filter(path) -> TargetFilter:
    """Piecewise-linear filter from a text file of "x<TAB>f(x)" samples."""
    xs, ys = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DomainError(f"{path}:{lineno}: expected 'x<TAB>f(x)'")
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
    if not xs:
        raise DomainError(f"{path}: no samples")
    order = np.argsort(xs)
    xs = np.asarray(xs)[order]
    ys = np.asarray(ys)[order]
    interior = tuple(float(v) for v in xs if FILTER_DOMAIN[0] < v < FILTER_DOMAIN[1])
    return TargetFilter(
        "custom", lambda t, xs=xs, ys=ys: np.interp(t, xs, ys), interior
    )


# ---------------------------------------------------------------------------
# Composite Gauss-Legendre quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadGrid:
    """Composite Gauss-Legendre grid: panel edges plus flattened nodes and
    weights. Nodes are strictly interior to panels and ascending."""

    edges: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    def node_range(self, lo: float, hi: float) -> tuple[int, int]:
        """Contiguous node index range covering [lo, hi]; exact whenever lo
        and hi are panel edges."""
        i0 = int(np.searchsorted(self.nodes, lo, side="left"))
        i1 = int(np.searchsorted(self.nodes, hi, side="left"))
        return i0, i1

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)


def quad_grid(
    a: float,
    b: float,
    breakpoints: Sequence[float] = (),
    max_width: float = QUAD_MAX_WIDTH,
    order: int = QUAD_ORDER,
) -> QuadGrid:
    if not a < b:
        raise DomainError(f"empty interval [{a}, {b}]")
    pts = sorted({a, b} | {float(t) for t in breakpoints if a < t < b})
    edges = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        k = max(1, math.ceil((hi - lo) / max_width - 1e-12))
        edges.append(np.linspace(lo, hi, k + 1)[:-1])
    edges = np.concatenate(edges + [np.array([b])])
    t, w = np.polynomial.legendre.leggauss(order)
    lo = edges[:-1][:, None]
    hi = edges[1:][:, None]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo) + half * t[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return QuadGrid(edges=edges, nodes=nodes, weights=weights)


# ---------------------------------------------------------------------------
# Polynomial bases and design matrices
# ---------------------------------------------------------------------------


def eval_basis(basis: str, d: int, D: int, x) -> np.ndarray | float:
    """d-th basis function of the degree-D family at x in [0, 2].

    monomial: x^d; chebyshev: T_d(x - 1); bernstein: C(D,d)(x/2)^d (1-x/2)^(D-d).
    """
    if not 0 <= d <= D:
        raise DomainError(f"term index d={d} outside 0..{D}")
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and (arr.min() < FILTER_DOMAIN[0] or arr.max() > FILTER_DOMAIN[1]):
        raise DomainError("basis argument outside [0, 2]")
    if basis == "monomial":
        out = arr**d
    elif basis == "chebyshev":
        t = arr - 1.0
        prev, cur = np.ones_like(t), t
        if d == 0:
            out = prev
        else:
            for _ in range(d - 1):
                prev, cur = cur, 2.0 * t * cur - prev
            out = cur
    elif basis == "bernstein":
        u = arr / 2.0
        out = math.comb(D, d) * u**d * (1.0 - u) ** (D - d)
    else:
        raise DomainError(f"eval_basis supports monomial/chebyshev/bernstein, not {basis!r}")
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def design_matrix(
    basis: str, D: int, x: np.ndarray, trig: tuple[int, float] | None = None
) -> np.ndarray:
    """Columns of basis functions at x. For the first three bases there are
    D+1 columns; trig_tpd has 2(K+1) columns (the degree-D truncated power
    series of sin(k*omega*x) then cos(k*omega*x))."""
    x = np.asarray(x, dtype=np.float64)
    if basis in ("monomial", "chebyshev", "bernstein"):
        return np.column_stack([eval_basis(basis, d, D, x) for d in range(D + 1)])
    if basis == "trig_tpd":
        from .trig import taylor_tables

        if trig is None:
            trig = (D, 0.5 * np.pi)
        K, omega = trig
        tables = taylor_tables(K, omega, D)
        powers = np.column_stack([x**d for d in range(D + 1)])
        return np.hstack([powers @ tables.Gamma.T, powers @ tables.Theta.T])
    raise DomainError(f"unknown basis {basis!r}")


# ---------------------------------------------------------------------------
# Least-squares fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyFit:
    """A fitted degree-D filter.

    ``coefficients`` always has D+1 entries: coefficients in the named basis
    for monomial/chebyshev/bernstein, or the effective power-series
    coefficients for trig_tpd (whose raw 2(K+1) parameters sit in
    ``raw_params`` as (alpha, beta)). ``fit_error`` is the squared residual
    in the metric the fit minimized.
    """

    basis: str
    degree: int
    coefficients: np.ndarray
    fit_error: float
    rank_deficient: bool = False
    trig: tuple[int, float] | None = None
    raw_params: tuple[np.ndarray, np.ndarray] | None = None

    def __call__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        if self.basis == "trig_tpd":
            out = np.polynomial.polynomial.polyval(arr, self.coefficients)
        else:
            cols = design_matrix(self.basis, self.degree, arr.ravel())
            out = (cols @ self.coefficients).reshape(arr.shape)
        return float(out) if arr.ndim == 0 else out


class LstsqSolver:
    """Factorization of one (weighted) design matrix, reused across many
    right-hand sides.

    Uses QR when the design has full numerical rank; otherwise falls back to
    SVD, which returns the minimum-norm solution and raises the
    ``rank_deficient`` flag instead of failing.
    """

    def __init__(self, A: np.ndarray):
        self.A = A
        m, p = A.shape
        q, r = np.linalg.qr(A)
        diag = np.abs(np.diag(r))
        tol = max(m, p) * np.finfo(np.float64).eps * (diag.max() if diag.size else 0.0)
        self.rank_deficient = bool(diag.size == 0 or diag.min() <= tol)
        if self.rank_deficient:
            u, s, vt = np.linalg.svd(A, full_matrices=False)
            keep = s > (s[0] * max(m, p) * np.finfo(np.float64).eps if s.size else 0)
            self._u = u[:, keep]
            self._s = s[keep]
            self._vt = vt[keep]
            self._q = self._r = None
        else:
            self._q, self._r = q, r
            self._u = self._s = self._vt = None

    def solve(self, y: np.ndarray, rows: tuple[int, int] | None = None) -> np.ndarray:
        """Least-squares coefficients; ``rows=(i0, i1)`` marks the support of
        y (zero elsewhere) so projections touch only those rows."""
        if rows is None:
            yl, i0, i1 = y, 0, self.A.shape[0]
        else:
            i0, i1 = rows
            yl = y[i0:i1] if len(y) == self.A.shape[0] else y
        if self.rank_deficient:
            proj = self._u[i0:i1].T @ yl
            return self._vt.T @ (proj / self._s)
        proj = self._q[i0:i1].T @ yl
        from scipy.linalg import solve_triangular

        return solve_triangular(self._r, proj)

    def residual_sq(self, coef: np.ndarray, y: np.ndarray,
                    rows: tuple[int, int] | None = None) -> float:
        """||A coef - y||^2 for y supported on ``rows`` (full vector if None)."""
        fitted = self.A @ coef
        if rows is not None:
            i0, i1 = rows
            r2 = float(fitted @ fitted)
            yl = y[i0:i1] if len(y) == self.A.shape[0] else y
            seg = fitted[i0:i1]
            r2 += float(yl @ yl) - 2.0 * float(seg @ yl)
            return max(r2, 0.0)
        r = fitted - y
        return float(r @ r)


def lse_fit_discrete(
    basis: str,
    D: int,
    points: np.ndarray,
    values: np.ndarray,
    weights: np.ndarray | None = None,
    trig: tuple[int, float] | None = None,
) -> PolyFit:
    """Least-squares fit on sample points; plain (unweighted) unless weights
    are given, in which case fit_error is the weighted squared residual."""
    points = np.asarray(points, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if points.shape != values.shape or points.size < 1:
        raise DomainError("points and values must be equal-length, non-empty")
    A = design_matrix(basis, D, points, trig)
    y = values
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=np.float64))
        A = A * sw[:, None]
        y = y * sw
    solver = LstsqSolver(A)
    raw = solver.solve(y)
    err = solver.residual_sq(raw, y)
    return _package_fit(basis, D, raw, err, solver.rank_deficient, trig)


def _package_fit(basis, D, raw, err, deficient, trig) -> PolyFit:
    if basis == "trig_tpd":
        from .trig import taylor_tables

        if trig is None:
            trig = (D, 0.5 * np.pi)
        K, omega = trig
        tables = taylor_tables(K, omega, D)
        alpha, beta = raw[: K + 1], raw[K + 1 :]
        coef = tables.Gamma.T @ alpha + tables.Theta.T @ beta
        return PolyFit(basis, D, coef, float(err), deficient, trig, (alpha, beta))
    return PolyFit(basis, D, raw, float(err), deficient, trig)


def lse_fit_continuous(
    basis: str,
    D: int,
    filt: TargetFilter,
    interval: tuple[float, float] = FILTER_DOMAIN,
    trig: tuple[int, float] | None = None,
    grid: QuadGrid | None = None,
) -> PolyFit:
    """Minimize the integral of the squared residual over the interval via
    composite Gauss-Legendre quadrature reduced to a weighted discrete fit."""
    a, b = interval
    if grid is None:
        grid = quad_grid(a, b, breakpoints=filt.breakpoints)
    vals = eval_target(filt, grid.nodes)
    return lse_fit_discrete(basis, D, grid.nodes, vals, weights=grid.weights, trig=trig)


# ---------------------------------------------------------------------------
# Function slices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SliceSet:
    """Disjoint slices of a filter cut at sorted eigenvalues.

    Slice s (1-based) lives on [breakpoints[s-1], breakpoints[s]), half-open
    except the last, which is closed; the leading breakpoint is pinned to 0.
    Slices with equal endpoints are empty. ``closure`` appends one extra
    slice covering (lambda_n, 2] so the pieces sum to the filter on all of
    [0, 2] even when the largest eigenvalue falls short of 2.
    """

    filter: TargetFilter
    breakpoints: np.ndarray

    @property
    def n_slices(self) -> int:
        return len(self.breakpoints) - 1

    def interval(self, s: int) -> tuple[float, float, bool]:
        """(lo, hi, closed_right) of 1-based slice s."""
        lo = float(self.breakpoints[s - 1])
        hi = float(self.breakpoints[s])
        return lo, hi, s == self.n_slices

    def indicator(self, s: int, x: np.ndarray) -> np.ndarray:
        lo, hi, closed = self.interval(s)
        x = np.asarray(x, dtype=np.float64)
        if closed:
            return (x >= lo) & (x <= hi)
        return (x >= lo) & (x < hi)

    def slice_values(self, s: int, x: np.ndarray) -> np.ndarray:
        """Zero-extended slice s evaluated at x."""
        x = np.asarray(x, dtype=np.float64)
        mask = self.indicator(s, x)
        out = np.zeros_like(x)
        if mask.any():
            out[mask] = eval_target(self.filter, x[mask])
        return out

    def sum_values(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        total = np.zeros_like(x)
        for s in range(1, self.n_slices + 1):
            total += self.slice_values(s, x)
        return total


def slice_filter(
    filt: TargetFilter, eigenvalues: np.ndarray, closure: bool = False
) -> SliceSet:
    """Cut ``filt`` at the sorted eigenvalues (prepending 0 as the first
    breakpoint). With ``closure=True`` a final slice up to 2 is appended so
    the slices partition the whole filter domain."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size < 1:
        raise UnsortedInput("need at least one eigenvalue")
    if np.any(np.diff(lam) < 0):
        raise UnsortedInput("eigenvalues must be sorted ascending")
    if lam[0] < -1e-9 or lam[-1] > 2.0 + 1e-9:
        raise DomainError("eigenvalues outside [0, 2]")
    lam = np.clip(lam, 0.0, 2.0)
    bp = np.concatenate([[0.0], lam])
    if closure and bp[-1] < FILTER_DOMAIN[1]:
        bp = np.concatenate([bp, [FILTER_DOMAIN[1]]])
    return SliceSet(filter=filt, breakpoints=bp)


def slice_errors(
    filt: TargetFilter,
    eigenvalues: np.ndarray,
    basis: str,
    D: int,
    trig: tuple[int, float] | None = None,
    closure: bool = False,
    return_fits: bool = False,
):
    """Continuous squared LSE error of each zero-extended slice, fitted over
    the full [0, 2] domain.

    All slices share one quadrature grid (panels aligned to every slice
    breakpoint) and one design-matrix factorization; only the target vector
    changes per slice, restricted to its supporting node range.
    """
    ss = slice_filter(filt, eigenvalues, closure=closure)
    grid = quad_grid(
        *FILTER_DOMAIN,
        breakpoints=tuple(ss.breakpoints) + tuple(filt.breakpoints),
    )
    A = design_matrix(basis, D, grid.nodes, trig) * np.sqrt(grid.weights)[:, None]
    solver = LstsqSolver(A)
    fvals = eval_target(filt, grid.nodes)
    sqrtw = np.sqrt(grid.weights)

    errors = np.zeros(ss.n_slices)
    fits = []
    for s in range(1, ss.n_slices + 1):
        lo, hi, _ = ss.interval(s)
        i0, i1 = grid.node_range(lo, hi)
        if i0 == i1:
            if return_fits:
                fits.append(None)
            continue
        y_local = fvals[i0:i1] * sqrtw[i0:i1]
        raw = solver.solve(y_local, rows=(i0, i1))
        errors[s - 1] = solver.residual_sq(raw, y_local, rows=(i0, i1))
        if return_fits:
            fits.append(_package_fit(basis, D, raw, errors[s - 1],
                                     solver.rank_deficient, trig))
    if return_fits:
        return errors, fits
    return errors
