"""Fiber eigenpairs, dispersion curves, their slopes and preimages of energy windows."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    InvalidArgument,
    MonotonicityViolation,
    NumericalFailure,
    SimplicityViolation,
    UnsupportedFamily,
)
from .model import (
    DEFAULT_H,
    DEFAULT_MARGIN,
    FieldConfig,
    FiberProblem,
    PotentialSpec,
    assemble_fiber,
    edge_index,
    fiber_grid,
    grid_nodes,
    make_problem,
)
from .numerics import Grid, integrate, lowest_eigenpairs

SIMPLICITY_RTOL = 1e-9
INVERSION_RTOL = 1e-8
MONOTONE_NOISE = 1e-8


def default_workers() -> int:
    env = os.environ.get("EDGECURRENT_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def ordered_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally threaded; the output order never depends on timing."""
    items = list(items)
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class FiberEigenpairs:
    """Lowest eigenpairs of one fiber h0(k).

    ``phi[j]`` is sampled on every node of ``grid`` (zero at both Dirichlet ends),
    has unit discrete L2 norm and is positive on the far-left tail.
    """

    k: float
    omega: np.ndarray
    phi: np.ndarray
    grid: Grid
    B: float

    @property
    def n_levels(self) -> int:
        return self.omega.size

    @property
    def x(self) -> np.ndarray:
        return grid_nodes(self.grid)

    def level(self, j: int) -> tuple[float, np.ndarray]:
        if not 0 <= j < self.n_levels:
            raise InvalidArgument(f"level {j} not computed (have {self.n_levels})")
        return float(self.omega[j]), self.phi[j]

    def edge_value(self, j: int) -> float:
        _, phi = self.level(j)
        return float(phi[edge_index(self.grid)])


def _fix_sign(v: np.ndarray) -> np.ndarray:
    # first node (from the left) that is clearly above round-off: inside the left
    # forbidden region an eigenfunction keeps one sign, so this is well defined
    big = np.abs(v) >= 1e-6 * np.max(np.abs(v))
    i = int(np.argmax(big))
    return -v if v[i] < 0 else v


def solve_fiber(problem: FiberProblem, n_levels: int) -> FiberEigenpairs:
    if n_levels < 1:
        raise InvalidArgument("n_levels must be >= 1")
    op = assemble_fiber(problem)
    w, vecs = lowest_eigenpairs(op, n_levels)
    B = problem.field.B
    gaps = np.diff(w)
    if gaps.size and np.min(gaps) < SIMPLICITY_RTOL * B:
        raise SimplicityViolation(
            f"near-degenerate eigenvalues at k={problem.k} (min gap {np.min(gaps):.3e});"
            " the grid is probably under-resolved")
    phi = np.zeros((n_levels, problem.grid.n_points))
    for j in range(n_levels):
        phi[j, 1:-1] = _fix_sign(vecs[j])
    phi.setflags(write=False)
    w = np.asarray(w)
    w.setflags(write=False)
    return FiberEigenpairs(problem.k, w, phi, problem.grid, B)


def slope_feynman_hellmann(pairs: FiberEigenpairs, j: int, field: FieldConfig) -> float:
    """omega_j'(k) = 2 * int (k - Bx) phi_j(x;k)^2 dx."""
    _, phi = pairs.level(j)
    return 2.0 * integrate((pairs.k - field.B * pairs.x) * phi**2, pairs.grid)


def slope_trace_formula(pairs: FiberEigenpairs, j: int, spec: PotentialSpec, field: FieldConfig) -> float:
    """omega_j'(k) = -(V0/B) phi_j(0;k)^2, valid for the sharp step only."""
    if spec.family != "sharp":
        raise UnsupportedFamily("the boundary-trace slope formula needs the sharp family")
    return -(spec.amplitude / field.B) * pairs.edge_value(j) ** 2


@dataclass(frozen=True)
class Window:
    """Energy window [(2n+a)B, (2n+c)B] with an optional outer window of the same midpoint."""

    n: int
    a: float
    c: float
    a_outer: float | None = None
    c_outer: float | None = None

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise InvalidArgument("window level n must be an integer >= 0")
        if not 1 < self.a <= self.c < 3:
            raise InvalidArgument(f"need 1 < a <= c < 3, got a={self.a}, c={self.c}")
        if (self.a_outer is None) != (self.c_outer is None):
            raise InvalidArgument("outer window needs both a_outer and c_outer")
        if self.a_outer is not None:
            if not 1 < self.a_outer < self.a or not self.c < self.c_outer < 3:
                raise InvalidArgument("need 1 < a_outer < a <= c < c_outer < 3")
            if abs((self.a_outer + self.c_outer) - (self.a + self.c)) > 1e-9:
                raise InvalidArgument("inner and outer windows must share their midpoint")

    @property
    def has_outer(self) -> bool:
        return self.a_outer is not None

    def bounds(self, B: float) -> tuple[float, float]:
        return (2 * self.n + self.a) * B, (2 * self.n + self.c) * B

    def outer_bounds(self, B: float) -> tuple[float, float]:
        if not self.has_outer:
            raise InvalidArgument("window has no outer interval")
        return (2 * self.n + self.a_outer) * B, (2 * self.n + self.c_outer) * B

    def outer(self) -> "Window":
        return Window(self.n, self.a_outer, self.c_outer)

    def to_dict(self) -> dict:
        return {"n": self.n, "a": self.a, "c": self.c,
                "a_outer": self.a_outer, "c_outer": self.c_outer}


@dataclass
class DispersionTable:
    """omega_j(k) and omega_j'(k) on an ascending k-grid, all fibers on one shared x-grid."""

    spec: PotentialSpec
    field: FieldConfig
    k_grid: np.ndarray
    omega: np.ndarray
    slope: np.ndarray
    grid: Grid
    slope_method: str = "feynman_hellmann"
    perturbation: Callable | None = None
    monotone: list = field(default_factory=list)
    margin: float = DEFAULT_MARGIN

    @property
    def n_levels(self) -> int:
        return self.omega.shape[0]

    def problem(self, k: float) -> FiberProblem:
        return make_problem(self.spec, self.field, k, self.grid, self.perturbation,
                            margin=self.margin)

    def fiber(self, k: float, n_levels: int | None = None) -> FiberEigenpairs:
        return solve_fiber(self.problem(k), n_levels or self.n_levels)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["k"]
        for j in range(self.n_levels):
            header += [f"omega_{j}", f"slope_{j}"]
        writer.writerow(header)
        for i, k in enumerate(self.k_grid):
            row = [repr(float(k))]
            for j in range(self.n_levels):
                row += [repr(float(self.omega[j, i])), repr(float(self.slope[j, i]))]
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "spec": self.spec.to_dict(),
            "field": {"B": self.field.B},
            "grid": self.grid.to_dict(),
            "margin": self.margin,
            "slope_method": self.slope_method,
            "tolerances": {"simplicity_rtol": SIMPLICITY_RTOL,
                           "inversion_rtol": INVERSION_RTOL,
                           "monotone_noise": MONOTONE_NOISE},
            "perturbed": self.perturbation is not None,
            "monotone": self.monotone,
            "k": [float(k) for k in self.k_grid],
            "omega": [[float(v) for v in row] for row in self.omega],
            "slope": [[float(v) for v in row] for row in self.slope],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _is_decreasing(row: np.ndarray, B: float) -> bool:
    return bool(np.all(np.diff(row) <= MONOTONE_NOISE * B))


def scan_dispersion(
    spec: PotentialSpec,
    field: FieldConfig,
    k_grid: Sequence[float],
    n_levels: int,
    h: float = DEFAULT_H,
    margin: float = DEFAULT_MARGIN,
    perturbation: Callable | None = None,
    workers: int | None = None,
) -> DispersionTable:
    ks = np.asarray(k_grid, dtype=float)
    if ks.ndim != 1 or ks.size < 2 or np.any(np.diff(ks) <= 0):
        raise InvalidArgument("k_grid must be ascending with at least two points")
    grid = fiber_grid(spec, field, ks, h=h, margin=margin)

    def one(k):
        try:
            pairs = solve_fiber(make_problem(spec, field, k, grid, perturbation, margin=margin),
                                n_levels)
        except NumericalFailure as exc:
            raise type(exc)(f"fiber k={k}: {exc}") from exc
        return pairs.omega.copy(), np.array(
            [slope_feynman_hellmann(pairs, j, field) for j in range(n_levels)])

    results = ordered_map(one, ks, workers)
    omega = np.array([r[0] for r in results]).T
    slope = np.array([r[1] for r in results]).T
    table = DispersionTable(spec, field, ks, omega, slope, grid,
                            perturbation=perturbation, margin=margin)
    if spec.is_one_edge:
        table.monotone = [_is_decreasing(omega[j], field.B) for j in range(n_levels)]
    else:
        table.monotone = [True] * n_levels
    return table


@dataclass(frozen=True)
class Preimage:
    """k-interval where omega_j lies in the window; ``k_c < k_a`` because omega_j decreases."""

    j: int
    k_c: float | None
    k_a: float | None
    clipped: bool = False

    @property
    def empty(self) -> bool:
        return self.k_c is None

    @property
    def length(self) -> float:
        return 0.0 if self.empty else self.k_a - self.k_c

    def contains(self, k: float) -> bool:
        return not self.empty and self.k_c <= k <= self.k_a

    def midpoint(self) -> float:
        if self.empty:
            raise InvalidArgument("empty preimage has no midpoint")
        return 0.5 * (self.k_c + self.k_a)

    def to_dict(self) -> dict:
        return {"j": self.j, "k_c": self.k_c, "k_a": self.k_a,
                "empty": self.empty, "clipped": self.clipped}


def _crossing(table: DispersionTable, j: int, target: float) -> float | None:
    row = table.omega[j]
    ks = table.k_grid
    above = row >= target
    # last node still at or above target, row is decreasing
    idx = np.nonzero(above[:-1] & ~above[1:])[0]
    if idx.size == 0:
        return None
    i = int(idx[0])
    B = table.field.B
    f = lambda k: table.fiber(k, j + 1).omega[j] - target
    k0, k1 = ks[i], ks[i + 1]
    if row[i] == target:
        return float(k0)
    kk = brentq(f, k0, k1, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(f(kk)) > INVERSION_RTOL * B:
        raise NumericalFailure(f"preimage refinement stalled at k={kk}")
    return float(kk)


def _monotone_span(table: DispersionTable, row: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Whole row without a perturbation; otherwise the nodes bracketing the window.

    A bounded perturbation ripples the flat bulk part of a curve, which is harmless
    as long as the curve is monotone where it crosses the window.
    """
    if table.perturbation is None:
        return row
    inside = np.nonzero((row >= lo) & (row <= hi))[0]
    if inside.size == 0:
        cross = np.nonzero(np.diff(np.sign(row - 0.5 * (lo + hi))))[0]
        if cross.size == 0:
            return row[:1]
        i0, i1 = int(cross[0]), int(cross[-1]) + 1
    else:
        i0, i1 = int(inside[0]), int(inside[-1])
    return row[max(i0 - 1, 0): i1 + 2]


def invert_dispersion(table: DispersionTable, j: int, window: Window) -> Preimage:
    """k-interval [k_c, k_a] with omega_j(k_c) = (2n+c)B and omega_j(k_a) = (2n+a)B.

    Endpoints are refined by bisection on fresh fiber solves. An interval that runs
    off the tabulated range is clipped to it and flagged.
    """
    if not 0 <= j < table.n_levels:
        raise InvalidArgument(f"level {j} not in table")
    B = table.field.B
    lo, hi = window.bounds(B)
    row = table.omega[j]
    if table.spec.is_one_edge and not _is_decreasing(_monotone_span(table, row, lo, hi), B):
        raise MonotonicityViolation(f"omega_{j} is not decreasing on the table range")
    if table.spec.family == "none" or row.max() < lo or row.min() > hi:
        return Preimage(j, None, None)
    clipped = False
    k_c = _crossing(table, j, hi)
    if k_c is None:
        if row[0] <= hi:
            k_c, clipped = float(table.k_grid[0]), True
        else:
            return Preimage(j, None, None)
    k_a = _crossing(table, j, lo)
    if k_a is None:
        if row[-1] >= lo:
            k_a, clipped = float(table.k_grid[-1]), True
        else:
            return Preimage(j, None, None)
    if k_a < k_c:
        return Preimage(j, None, None)
    return Preimage(j, k_c, k_a, clipped)


def check_disjointness(table: DispersionTable, window: Window) -> dict:
    """Pairwise emptiness of preimage intersections for levels 0..n.

    For each pair the direct interval test is reported alongside the sufficient
    condition ``(2n+c)B - omega_j(k_l^c) > (c-a)B`` (lower level j, upper level l).
    """
    n = window.n
    if table.n_levels < n + 1:
        raise InvalidArgument(f"table needs at least {n + 1} levels")
    B = table.field.B
    pre = [invert_dispersion(table, j, window) for j in range(n + 1)]
    pairs = {}
    all_empty = True
    for j in range(n + 1):
        for l in range(j + 1, n + 1):
            pj, pl = pre[j], pre[l]
            if pj.empty or pl.empty:
                direct_empty, cond = True, None
            else:
                direct_empty = pj.k_a < pl.k_c or pl.k_a < pj.k_c
                omega_j_at = table.fiber(pl.k_c, l + 1).omega[j]
                cond = bool((2 * n + window.c) * B - omega_j_at > (window.c - window.a) * B)
            all_empty &= direct_empty
            pairs[f"{j},{l}"] = {
                "empty": bool(direct_empty),
                "condition_empty1": cond,
                "consistent": cond is None or not cond or direct_empty,
            }
    return {"preimages": [p.to_dict() for p in pre], "pairs": pairs, "disjoint": bool(all_empty)}


# --- Dirichlet limit ----------------------------------------------------------


@dataclass
class LadderRow:
    amplitude: float
    omega: float
    omega_dirichlet: float
    gap: float
    overlap_defect: float
    left_mass: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dirichlet_ladder(
    field: FieldConfig,
    window: Window,
    amplitudes: Sequence[float],
    j: int = 0,
    k_star: float | None = None,
    h: float = 0.001,
    margin: float = DEFAULT_MARGIN,
) -> dict:
    """Compare sharp-step fibers with the Dirichlet fiber at one momentum k*.

    ``k*`` defaults to the midpoint of the Dirichlet preimage of the window. Inner
    products are taken on the common half-line x >= 0; ``left_mass`` records the
    part of the sharp eigenfunction that lives on x < 0.
    """
    amps = [float(v) for v in amplitudes]
    if any(b <= a for a, b in zip(amps, amps[1:])):
        raise InvalidArgument("amplitudes must be strictly ascending")
    B = field.B
    if any(v <= (2 * window.n + 3) * B for v in amps):
        raise InvalidArgument("every amplitude must exceed (2n+3)B")
    dspec = PotentialSpec("dirichlet_edge")
    scan_k = np.linspace(-2.0 * math.sqrt(B), 6.0 * math.sqrt(B), 81)
    dtable = scan_dispersion(dspec, field, scan_k, j + 1, h=0.005, margin=margin, workers=1)
    dpre = invert_dispersion(dtable, j, window)
    if dpre.empty:
        raise InvalidArgument("window misses the Dirichlet dispersion curve")
    if k_star is None:
        k_star = dpre.midpoint()
    elif not dpre.contains(k_star):
        raise InvalidArgument(f"k*={k_star} is outside the Dirichlet preimage {dpre.to_dict()}")
    dgrid = fiber_grid(dspec, field, k_star, h=h, margin=margin)
    dpairs = solve_fiber(make_problem(dspec, field, k_star, dgrid, margin=margin), j + 1)
    wd, phid = dpairs.level(j)
    rows = []
    for amp in amps:
        spec = PotentialSpec("sharp", amp)
        g = fiber_grid(spec, field, k_star, h=h, margin=margin)
        pairs = solve_fiber(make_problem(spec, field, k_star, g, margin=margin), j + 1)
        w, phi = pairs.level(j)
        e = edge_index(g)
        right = phi[e:]
        if right.size != phid.size:
            raise NumericalFailure("half-line grids of the two problems do not line up")
        overlap = float(dgrid.h * (np.sum(right * phid) - 0.5 * (right[0] * phid[0] + right[-1] * phid[-1])))
        left_mass = integrate(np.where(pairs.x <= 0, phi**2, 0.0), g)
        rows.append(LadderRow(amp, w, wd, wd - w, 1.0 - overlap**2, left_mass))
    gaps = np.array([r.gap for r in rows])
    defects = np.array([r.overlap_defect for r in rows])
    omegas = np.array([r.omega for r in rows])
    if np.all(gaps > 0):
        slope = float(np.polyfit(np.log(amps), np.log(gaps), 1)[0])
    else:
        slope = float("nan")
    return {
        "j": j,
        "k_star": float(k_star),
        "dirichlet_preimage": dpre.to_dict(),
        "rows": [r.to_dict() for r in rows],
        "gaps_positive": bool(np.all(gaps >= 0)),
        "gaps_strictly_decreasing": bool(np.all(np.diff(gaps) < 0)),
        "omega_nondecreasing": bool(np.all(np.diff(omegas) >= 0)),
        "overlap_defect_monotone": bool(np.all(np.diff(defects) <= 0)),
        "gap_decay_exponent": slope,
    }
