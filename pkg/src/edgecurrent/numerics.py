"""Uniform grids, trapezoid quadrature, tridiagonal eigenpairs and Hermite functions.

Nothing in here knows about magnetic fields or potentials; the physics modules
build on these primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import LinAlgError, eigh_tridiagonal, solve_banded

from .errors import InvalidArgument, NumericalFailure

__all__ = [
    "Grid",
    "TridiagonalOperator",
    "build_grid",
    "integrate",
    "cumulative_integral",
    "lowest_eigenpairs",
    "hermite_gaussian",
    "hermite_gaussian_array",
    "oscillator_functions",
    "RESIDUAL_RTOL",
]

RESIDUAL_RTOL = 1e-10
MAX_HERMITE_ORDER = 60


def _frozen(a: ArrayLike) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``x_i = x_min + i*h`` for ``i = 0..n_points-1``."""

    x_min: float
    x_max: float
    n_points: int
    h: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise InvalidArgument("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise InvalidArgument(f"x_min={self.x_min} must be < x_max={self.x_max}")
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise InvalidArgument(f"n_points must be an integer >= 3, got {self.n_points}")
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "h", (self.x_max - self.x_min) / (self.n_points - 1))

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_points) * self.h

    def index_of(self, x: float) -> int:
        """Index of the node closest to ``x`` (clipped to the grid)."""
        i = int(round((x - self.x_min) / self.h))
        return min(max(i, 0), self.n_points - 1)

    def contains(self, x: float) -> bool:
        return self.x_min <= x <= self.x_max

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n_points": self.n_points, "h": self.h}


def build_grid(x_min: float, x_max: float, n_points: int) -> Grid:
    return Grid(float(x_min), float(x_max), n_points)


def integrate(samples: ArrayLike, grid: Grid) -> float:
    """Composite trapezoid rule of ``samples`` over ``grid``."""
    f = np.asarray(samples, dtype=float)
    if f.ndim != 1 or f.shape[0] != grid.n_points:
        raise InvalidArgument(
            f"samples length {f.shape} does not match grid n_points={grid.n_points}"
        )
    return float(grid.h * (f.sum() - 0.5 * (f[0] + f[-1])))


def cumulative_integral(samples: ArrayLike, h: float) -> np.ndarray:
    """Running trapezoid integral from the first sample; ``out[0] == 0``."""
    f = np.asarray(samples, dtype=float)
    out = np.zeros_like(f)
    if f.size > 1:
        out[1:] = np.cumsum(0.5 * h * (f[1:] + f[:-1]))
    return out


@dataclass(frozen=True)
class TridiagonalOperator:
    """Real symmetric tridiagonal matrix acting on nodal values with spacing ``spacing``.

    The spacing only enters the eigenvector normalisation ``sum(v**2) * spacing == 1``.
    """

    diagonal: np.ndarray
    off_diagonal: np.ndarray
    spacing: float = 1.0

    def __post_init__(self):
        d = _frozen(self.diagonal)
        e = _frozen(self.off_diagonal)
        if d.ndim != 1 or e.ndim != 1 or e.size != d.size - 1 or d.size < 1:
            raise InvalidArgument("off_diagonal must have length len(diagonal) - 1")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise InvalidArgument("operator entries must be finite")
        if not self.spacing > 0:
            raise InvalidArgument("spacing must be positive")
        object.__setattr__(self, "diagonal", d)
        object.__setattr__(self, "off_diagonal", e)

    @property
    def size(self) -> int:
        return self.diagonal.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diagonal * v
        out[:-1] += self.off_diagonal * v[1:]
        out[1:] += self.off_diagonal * v[:-1]
        return out

    def inf_norm(self) -> float:
        row = np.abs(self.diagonal).copy()
        row[:-1] += np.abs(self.off_diagonal)
        row[1:] += np.abs(self.off_diagonal)
        return float(row.max())

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diagonal)
            + np.diag(self.off_diagonal, 1)
            + np.diag(self.off_diagonal, -1)
        )


def _inverse_iteration(op: TridiagonalOperator, lam: float, tol: float, rng) -> np.ndarray | None:
    n = op.size
    ab = np.zeros((3, n))
    ab[0, 1:] = op.off_diagonal
    ab[2, :-1] = op.off_diagonal
    scale = max(abs(lam), 1.0)
    for attempt in range(4):
        shift = lam + scale * 1e-13 * (attempt + 1) * (1 if attempt % 2 == 0 else -1)
        ab[1] = op.diagonal - shift
        v = rng.standard_normal(n)
        for _ in range(6):
            try:
                v = solve_banded((1, 1), ab, v)
            except (LinAlgError, ValueError):
                break
            v /= np.linalg.norm(v)
        if np.linalg.norm(op.matvec(v) - lam * v) <= tol:
            return v
    return None


def lowest_eigenpairs(op: TridiagonalOperator, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``count`` eigenpairs of a symmetric tridiagonal operator.

    Eigenvalues come from Sturm-sequence bisection and eigenvectors from inverse
    iteration (LAPACK ``stebz``/``stein``). Each eigenvector is normalised so that
    ``sum(v**2) * op.spacing == 1`` and its residual is checked against
    ``1e-10 * (|lambda| + ||T||_inf)``.

    Returns
    -------
    eigenvalues : ndarray, shape (count,)
        Ascending.
    eigenvectors : ndarray, shape (count, N)
        One eigenvector per row.
    """
    if int(count) != count or not 1 <= count <= op.size:
        raise InvalidArgument(f"count must be in [1, {op.size}], got {count}")
    count = int(count)
    if op.size == 1:
        return np.array([op.diagonal[0]]), np.array([[1.0 / math.sqrt(op.spacing)]])
    try:
        w, v = eigh_tridiagonal(
            op.diagonal, op.off_diagonal, select="i", select_range=(0, count - 1),
            lapack_driver="stebz",
        )
    except LinAlgError as exc:
        raise NumericalFailure(f"tridiagonal eigensolver failed: {exc}") from exc
    vecs = np.ascontiguousarray(v.T)
    tnorm = op.inf_norm()
    rng = np.random.default_rng(12345)
    for i, lam in enumerate(w):
        tol = RESIDUAL_RTOL * (abs(lam) + tnorm)
        u = vecs[i] / np.linalg.norm(vecs[i])
        if np.linalg.norm(op.matvec(u) - lam * u) > tol:
            u = _inverse_iteration(op, lam, tol, rng)
            if u is None:
                raise NumericalFailure(f"inverse iteration did not converge for eigenvalue {lam}")
        vecs[i] = u / math.sqrt(op.spacing)
    return np.asarray(w, dtype=float), vecs


def hermite_gaussian_array(m: int, u: ArrayLike) -> np.ndarray:
    """``H_m(u) * exp(-u**2/2)`` (physicists' Hermite), vectorised over ``u``.

    The recurrence runs on the damped quantity itself, starting from
    ``exp(-u**2/2)``, so no bare polynomial is ever formed.
    """
    if int(m) != m or not 0 <= m <= MAX_HERMITE_ORDER:
        raise InvalidArgument(f"Hermite order must be in [0, {MAX_HERMITE_ORDER}], got {m}")
    u = np.asarray(u, dtype=float)
    prev = np.exp(-0.5 * u * u)
    if m == 0:
        return prev
    cur = 2.0 * u * prev
    for j in range(1, int(m)):
        prev, cur = cur, 2.0 * u * cur - 2.0 * j * prev
    return cur


def hermite_gaussian(m: int, u: float) -> float:
    return float(hermite_gaussian_array(m, u))


def oscillator_functions(m_max: int, x: ArrayLike, B: float, k: float) -> np.ndarray:
    """Normalised Landau-fiber oscillator eigenfunctions ``psi_m(x;k)``, ``m = 0..m_max``.

    ``psi_m = (B/pi)^(1/4) (2^m m!)^(-1/2) exp(-B/2 (x-k/B)^2) H_m(sqrt(B) x - k/sqrt(B))``,
    evaluated with the orthonormal three-term recurrence (stable for large ``m``).
    Returns an array of shape ``(m_max + 1, len(x))``.
    """
    if m_max < 0:
        raise InvalidArgument("m_max must be >= 0")
    x = np.asarray(x, dtype=float)
    u = math.sqrt(B) * x - k / math.sqrt(B)
    out = np.empty((m_max + 1,) + x.shape)
    out[0] = (B / math.pi) ** 0.25 * np.exp(-0.5 * u * u)
    if m_max >= 1:
        out[1] = math.sqrt(2.0) * u * out[0]
    for m in range(1, m_max):
        out[m + 1] = math.sqrt(2.0 / (m + 1)) * u * out[m] - math.sqrt(m / (m + 1)) * out[m - 1]
    return out
