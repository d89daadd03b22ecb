"""Confining potentials, fibered operator assembly and soft-potential hypotheses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import CoverageInsufficient, InvalidArgument
from .numerics import Grid, TridiagonalOperator, build_grid

FAMILIES = ("none", "sharp", "dirichlet_edge", "parabolic", "exponential", "tanh", "monomial")
SPEC_KEYS = ("family", "amplitude", "exponent", "rate")

DEFAULT_H = 0.0025
DEFAULT_MARGIN = 8.0


@dataclass(frozen=True)
class PotentialSpec:
    """A confining potential supported on ``x < 0``.

    ``rate`` is the exponential growth rate for ``exponential`` and an optional
    steepness multiplier for ``tanh`` (``V0 = amplitude * tanh(rate * sqrt(B) |x|)``,
    default 1).
    """

    family: str = "sharp"
    amplitude: float = 0.0
    exponent: float | None = None
    rate: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown potential family {self.family!r}; expected one of {FAMILIES}")
        amp = float(self.amplitude)
        if not (math.isfinite(amp) and amp >= 0):
            raise InvalidArgument(f"amplitude must be finite and >= 0, got {self.amplitude}")
        object.__setattr__(self, "amplitude", amp)
        if self.family == "monomial":
            if self.exponent is None or not float(self.exponent) > 1:
                raise InvalidArgument("monomial family needs exponent p > 1")
            object.__setattr__(self, "exponent", float(self.exponent))
        if self.family == "exponential":
            if self.rate is None or not float(self.rate) > 0:
                raise InvalidArgument("exponential family needs rate > 0")
        if self.family == "tanh" and self.rate is not None and not float(self.rate) > 0:
            raise InvalidArgument("tanh rate must be > 0")
        if self.rate is not None:
            object.__setattr__(self, "rate", float(self.rate))

    @property
    def is_one_edge(self) -> bool:
        return self.family != "none"

    def to_dict(self) -> dict:
        return {"family": self.family, "amplitude": self.amplitude,
                "exponent": self.exponent, "rate": self.rate}

    @classmethod
    def from_dict(cls, block: Mapping) -> "PotentialSpec":
        unknown = sorted(set(block) - set(SPEC_KEYS))
        if unknown:
            raise InvalidArgument(f"unknown potential key(s): {', '.join(unknown)}")
        if "family" not in block:
            raise InvalidArgument("potential block needs a 'family' key")
        return cls(
            family=block["family"],
            amplitude=block.get("amplitude", 0.0) or 0.0,
            exponent=block.get("exponent"),
            rate=block.get("rate"),
        )


@dataclass(frozen=True)
class FieldConfig:
    B: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.B) and self.B > 0):
            raise InvalidArgument(f"magnetic field B must be > 0, got {self.B}")
        object.__setattr__(self, "B", float(self.B))

    def landau_level(self, n: int) -> float:
        return (2 * n + 1) * self.B


def eval_confining(spec: PotentialSpec, x, B: float = 1.0):
    """V0(x) for the given family; zero for ``x >= 0``. Vectorised over ``x``."""
    xa = np.asarray(x, dtype=float)
    left = xa < 0
    ax = np.where(left, -xa, 0.0)
    v0 = spec.amplitude
    fam = spec.family
    if fam in ("none", "dirichlet_edge"):
        out = np.zeros_like(xa)
    elif fam == "sharp":
        out = np.where(left, v0, 0.0)
    elif fam == "parabolic":
        out = np.where(left, v0 * ax * ax, 0.0)
    elif fam == "exponential":
        out = np.where(left, v0 * np.expm1(spec.rate * ax / math.sqrt(B)), 0.0)
    elif fam == "tanh":
        lam = spec.rate if spec.rate is not None else 1.0
        out = np.where(left, v0 * np.tanh(lam * math.sqrt(B) * ax), 0.0)
    else:  # monomial
        out = np.where(left, v0 * ax ** spec.exponent, 0.0)
    return float(out) if np.ndim(x) == 0 else out


def confining_derivative(spec: PotentialSpec, x, B: float = 1.0):
    """Classical derivative of V0 away from x = 0 (the sharp step contributes nothing here)."""
    xa = np.asarray(x, dtype=float)
    left = xa < 0
    ax = np.where(left, -xa, 0.0)
    v0 = spec.amplitude
    fam = spec.family
    if fam in ("none", "dirichlet_edge", "sharp"):
        out = np.zeros_like(xa)
    elif fam == "parabolic":
        out = np.where(left, 2.0 * v0 * xa, 0.0)
    elif fam == "exponential":
        r = spec.rate / math.sqrt(B)
        out = np.where(left, -v0 * r * np.exp(r * ax), 0.0)
    elif fam == "tanh":
        lam = (spec.rate if spec.rate is not None else 1.0) * math.sqrt(B)
        e = np.exp(-2.0 * lam * ax)
        out = np.where(left, -4.0 * v0 * lam * e / (1.0 + e) ** 2, 0.0)
    else:
        p = spec.exponent
        out = np.where(left, -v0 * p * ax ** (p - 1), 0.0)
    return float(out) if np.ndim(x) == 0 else out


def fiber_grid(
    spec: PotentialSpec,
    field: FieldConfig,
    k,
    h: float = DEFAULT_H,
    margin: float = DEFAULT_MARGIN,
) -> Grid:
    """Uniform grid with spacing ~h that has x = 0 as a node and covers every fiber in ``k``.

    ``k`` may be a scalar or a sequence (the grid then serves the whole range).
    """
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    B = field.B
    m = margin / math.sqrt(B)
    lo = min(ks.min() / B - m, -m)
    hi = max(ks.max() / B + m, m)
    i0 = 0 if spec.family == "dirichlet_edge" else int(math.ceil(-lo / h - 1e-9))
    i1 = int(math.ceil(hi / h - 1e-9))
    return Grid(-i0 * h, i1 * h, i0 + i1 + 1)


def edge_index(grid: Grid) -> int:
    i = grid.index_of(0.0)
    if abs(grid.x_min + i * grid.h) > 1e-6 * grid.h:
        raise InvalidArgument("grid has no node at the edge x = 0")
    return i


def grid_nodes(grid: Grid) -> np.ndarray:
    """Nodes with the edge node (if any) snapped to exactly 0."""
    x = grid.nodes
    if grid.x_min <= 0 <= grid.x_max:
        i = grid.index_of(0.0)
        if abs(x[i]) <= 1e-6 * grid.h:
            x[i] = 0.0
    return x


@dataclass(frozen=True)
class FiberProblem:
    spec: PotentialSpec
    field: FieldConfig
    k: float
    grid: Grid
    perturbation: np.ndarray | None = None
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if self.perturbation is not None:
            p = np.array(self.perturbation, dtype=float)
            if p.shape != (self.grid.n_points,) or not np.all(np.isfinite(p)):
                raise InvalidArgument("perturbation must be finite samples on the grid")
            p.setflags(write=False)
            object.__setattr__(self, "perturbation", p)
        object.__setattr__(self, "k", float(self.k))

    def check_coverage(self) -> None:
        B = self.field.B
        m = self.margin / math.sqrt(B) * (1 - 1e-9)
        g = self.grid
        centre = self.k / B
        if self.spec.family == "dirichlet_edge":
            if abs(g.x_min) > 1e-12:
                raise CoverageInsufficient("dirichlet_edge fibers need x_min = 0")
        elif g.x_min > min(centre - m, -m):
            raise CoverageInsufficient(
                f"grid x_min={g.x_min} does not reach {min(centre - m, -m)}")
        if g.x_max < max(centre + m, m * (self.spec.family != "dirichlet_edge")):
            raise CoverageInsufficient(f"grid x_max={g.x_max} does not reach {centre + m}")

    def confining_samples(self) -> np.ndarray:
        """V0 at the nodes; the sharp step node carries the cell average amplitude/2."""
        x = grid_nodes(self.grid)
        v = np.asarray(eval_confining(self.spec, x, self.field.B), dtype=float)
        if self.spec.family == "sharp" and self.grid.x_min < 0 < self.grid.x_max:
            v[edge_index(self.grid)] = 0.5 * self.spec.amplitude
        return v

    def potential_samples(self) -> np.ndarray:
        x = grid_nodes(self.grid)
        v = (self.field.B * x - self.k) ** 2 + self.confining_samples()
        if self.perturbation is not None:
            v = v + self.perturbation
        return v


def make_problem(
    spec: PotentialSpec,
    field: FieldConfig,
    k: float,
    grid: Grid | None = None,
    perturbation=None,
    h: float = DEFAULT_H,
    margin: float = DEFAULT_MARGIN,
) -> FiberProblem:
    """FiberProblem with a default grid when none is given.

    ``perturbation`` may be an array on the grid or a callable ``V1(x)``.
    """
    if grid is None:
        grid = fiber_grid(spec, field, k, h=h, margin=margin)
    if callable(perturbation):
        perturbation = np.asarray(perturbation(grid_nodes(grid)), dtype=float)
    return FiberProblem(spec, field, k, grid, perturbation, margin)


def assemble_fiber(problem: FiberProblem) -> TridiagonalOperator:
    """Second-order finite-difference matrix of h0(k) on the interior nodes.

    Both grid ends carry homogeneous Dirichlet conditions, so the matrix acts on
    nodes ``1..N-2`` (for ``dirichlet_edge`` the left end is the physical wall at 0).
    """
    problem.check_coverage()
    h = problem.grid.h
    v = problem.potential_samples()[1:-1]
    if not np.all(np.isfinite(v)):
        raise InvalidArgument("effective potential is not finite on the grid")
    n = v.size
    return TridiagonalOperator(2.0 / h**2 + v, np.full(n - 1, -1.0 / h**2), spacing=h)


# --- soft-potential hypotheses -------------------------------------------------


def hypothesis_threshold(n: int, c: float, eps: float, B: float) -> float:
    return (2 * n + c + 2.0 / eps) * B


def turning_point(spec: PotentialSpec, field: FieldConfig, threshold: float) -> float | None:
    """Largest x <= 0 with V0(x) >= threshold, or None when V0 never gets there."""
    v0, B = spec.amplitude, field.B
    fam = spec.family
    if fam in ("none", "dirichlet_edge") or v0 <= 0:
        return None
    if fam == "sharp":
        return 0.0 if v0 >= threshold else None
    if fam == "parabolic":
        return -math.sqrt(threshold / v0)
    if fam == "exponential":
        return -math.sqrt(B) * math.log1p(threshold / v0) / spec.rate
    if fam == "tanh":
        if v0 <= threshold:
            return None
        lam = (spec.rate if spec.rate is not None else 1.0) * math.sqrt(B)
        return -math.atanh(threshold / v0) / lam
    return -((threshold / v0) ** (1.0 / spec.exponent))


def h2_bound(B: float, eps: float) -> float:
    """Right side of (H2): 5 B^(3/2) / sqrt(2 eps)."""
    return 5.0 * B**1.5 / math.sqrt(2.0 * eps)


def b_v0(spec: PotentialSpec, field: FieldConfig) -> float:
    return math.sqrt(field.B**2 + spec.amplitude)


def lambda_n(spec: PotentialSpec, field: FieldConfig, n: int, c: float, eps: float) -> float:
    """Lambda_n(eps) = 2 sqrt(B^2 + V0) sqrt(1 + (2n+c) eps) for the parabolic family."""
    return 2.0 * b_v0(spec, field) * math.sqrt(1.0 + (2 * n + c) * eps)


@dataclass
class HypothesisReport:
    family: str
    n: int
    c: float
    eps: float
    threshold: float
    x_eps: float | None
    satisfiable: bool
    H1: bool = False
    H2: bool = False
    H2_max_derivative: float = float("nan")
    H2_bound: float = float("nan")
    H2_analytic_edge: float = float("nan")
    H2p: bool | None = None
    H2p_constant: float | None = None
    H2p_per_k: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "family": self.family, "n": self.n, "c": self.c, "eps": self.eps,
            "threshold": self.threshold, "x_eps": self.x_eps,
            "satisfiable": self.satisfiable, "H1": self.H1, "H2": self.H2,
            "H2_max_derivative": self.H2_max_derivative, "H2_bound": self.H2_bound,
            "H2_analytic_edge": self.H2_analytic_edge,
            "H2p": self.H2p, "H2p_constant": self.H2p_constant,
            "H2p_per_k": self.H2p_per_k, "notes": self.notes,
        }


def hypothesis_grid(spec: PotentialSpec, field: FieldConfig, x_min: float, h: float = DEFAULT_H,
                    points_per_scale: float = 100.0) -> Grid:
    """Grid on [x_min, 0] fine enough for finite-difference derivatives of V0.

    The spacing resolves the family's variation length ``1/(rate sqrt(B))`` with
    ``points_per_scale`` nodes, so steep profiles are not under-sampled.
    """
    if not x_min < 0:
        raise InvalidArgument("hypothesis grid needs x_min < 0")
    if spec.family in ("tanh", "exponential"):
        rate = (spec.rate if spec.rate is not None else 1.0)
        scale = 1.0 / (rate * math.sqrt(field.B)) if spec.family == "tanh" else math.sqrt(field.B) / rate
        h = min(h, scale / points_per_scale)
    n = int(math.ceil(-x_min / h)) + 1
    return build_grid(-(n - 1) * h, 0.0, n)


def check_hypotheses(
    spec: PotentialSpec,
    field: FieldConfig,
    n: int,
    c: float,
    eps: float,
    grid: Grid,
    k_samples: Sequence[float] | None = None,
) -> HypothesisReport:
    """Check (H1), (H2) and, when ``k_samples`` are given, (H2') on the grid nodes.

    An unreachable threshold is reported (``satisfiable=False``), not raised.
    """
    if not 1 < c < 3:
        raise InvalidArgument("need 1 < c < 3")
    if not 0 < eps <= 1:
        raise InvalidArgument("need eps in (0, 1]")
    if n < 0:
        raise InvalidArgument("need n >= 0")
    B = field.B
    thr = hypothesis_threshold(n, c, eps, B)
    x_eps = turning_point(spec, field, thr)
    rep = HypothesisReport(spec.family, n, c, eps, thr, x_eps, x_eps is not None)
    rep.H2_bound = h2_bound(B, eps)
    if x_eps is None:
        rep.notes.append("hypothesis-unsatisfiable: V0 never reaches the threshold")
        return rep
    x = grid_nodes(grid)
    v = np.asarray(eval_confining(spec, x, B))
    right = x >= x_eps
    left = x < x_eps
    tol = 1e-12 * thr
    rep.H1 = bool(np.all(v[right] >= -tol) and np.all(v[right] <= thr + tol)
                  and np.all(v[left] >= thr - tol))
    xl, vl = x[left], v[left]
    if xl.size >= 3:
        dv = np.gradient(vl, grid.h, edge_order=2)
    elif xl.size == 2:
        dv = np.full(2, (vl[1] - vl[0]) / grid.h)
    else:
        dv = np.zeros(xl.size)
        rep.notes.append("fewer than two grid nodes left of x_eps")
    rep.H2_max_derivative = float(np.max(np.abs(dv))) if dv.size else 0.0
    # the analytic left limit at x_eps is reported alongside, never used for the verdict
    rep.H2_analytic_edge = float(abs(confining_derivative(spec, np.nextafter(x_eps, -np.inf), B)))
    rep.H2 = bool(rep.H2_max_derivative <= rep.H2_bound * (1 + 1e-9))
    if spec.family == "monomial":
        rep.notes.append("H2' certification is not provided for the monomial family")
        return rep
    if k_samples is None or len(k_samples) == 0 or xl.size == 0:
        return rep
    fixed_c = lambda_n(spec, field, n, c, eps) if spec.family == "parabolic" else None
    all_ok = True
    worst = 0.0
    for k in k_samples:
        wp = dv + 2 * B * (B * xl - k)
        wc = (B * xl - k) ** 2 + vl - (2 * n + c) * B
        upper_ok = bool(np.all(wp <= 1e-9 * np.maximum(1.0, np.abs(wp))))
        positive = bool(np.all(wc > 0))
        needed = float(np.max(-wp / np.sqrt(np.maximum(wc, 1e-300)))) if positive else math.inf
        ck = fixed_c if fixed_c is not None else needed
        ok = upper_ok and positive and needed <= ck * (1 + 1e-9)
        all_ok &= ok
        worst = max(worst, needed)
        rep.H2p_per_k.append({"k": float(k), "C_k": ck, "needed": needed, "pass": ok})
    rep.H2p = bool(all_ok)
    rep.H2p_constant = fixed_c if fixed_c is not None else worst
    return rep
