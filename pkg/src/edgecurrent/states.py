"""Edge-current wave packets, current expectations and the theorem-level certificates.

A packet is stored fiberwise: for each level j a uniform k-grid over the preimage
of the window, amplitudes beta_j(k), and the per-fiber scalars the current needs
(omega_j, the velocity matrix element, an eigenvalue-only slope and the trace).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bounds import (
    F_eps,
    corollary_constant,
    default_h2p_constant,
    hermite_sup,
    kappa_and_F,
    restricted_sups,
    soft_constant,
    soft_integrals_at,
    turning_point_condition,
)
from .certificates import Certificate, certify
from .errors import (
    CoverageInsufficient,
    CrossTermRisk,
    EmptyWindow,
    InvalidArgument,
    StabilityFailure,
    UnsupportedFamily,
    UnsupportedPerturbation,
)
from .model import FieldConfig, HypothesisReport, PotentialSpec, edge_index, make_problem
from .numerics import integrate
from .spectra import (
    DispersionTable,
    Window,
    check_disjointness,
    invert_dispersion,
    ordered_map,
    scan_dispersion,
    solve_fiber,
)

K_NODES = 201
FD_STEP = 1e-4
PROFILES = ("flat", "gaussian", "custom")


def trapezoid_weights(k: np.ndarray) -> np.ndarray:
    if k.size == 1:
        return np.ones(1)
    h = np.diff(k)
    w = np.zeros_like(k)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True)
class LevelPacket:
    """Amplitudes of one level on its preimage nodes, with the fiber data they need."""

    j: int
    k: np.ndarray
    beta: np.ndarray
    weights: np.ndarray
    omega: np.ndarray
    velocity: np.ndarray
    slope_fd: np.ndarray
    trace: np.ndarray

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.beta) ** 2

    def integral(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * self.density * values))


@dataclass(frozen=True)
class WavePacket:
    window: Window
    spec: PotentialSpec
    field: FieldConfig
    levels: tuple
    profile: str
    seed: int
    table: DispersionTable = field(repr=False, compare=False)
    disjoint: bool = True
    time: float = 0.0

    @property
    def norm2(self) -> float:
        return float(sum(lv.integral(np.ones_like(lv.k)) for lv in self.levels))

    def to_dict(self) -> dict:
        return {
            "window": self.window.to_dict(),
            "spec": self.spec.to_dict(),
            "B": self.field.B,
            "profile": self.profile,
            "seed": self.seed,
            "time": self.time,
            "disjoint": self.disjoint,
            "levels": [
                {"j": lv.j, "k": lv.k.tolist(),
                 "beta": [[float(b.real), float(b.imag)] for b in lv.beta]}
                for lv in self.levels
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _fiber_scalars(table: DispersionTable, j: int, k: float) -> tuple:
    pairs = table.fiber(k, j + 1)
    w, phi = pairs.level(j)
    B = table.field.B
    vel = integrate((k - B * pairs.x) * phi**2, pairs.grid)
    # eigenvalue-only slope: independent of the eigenvector quadrature
    d = FD_STEP * math.sqrt(B)
    wp = table.fiber(k + d, j + 1).omega[j]
    wm = table.fiber(k - d, j + 1).omega[j]
    trace = phi[edge_index(pairs.grid)] if table.spec.family != "dirichlet_edge" else 0.0
    return w, vel, (wp - wm) / (2 * d), float(trace)


def _profile(kind: str, k: np.ndarray, rng, width: float) -> np.ndarray:
    lo, hi = k[0], k[-1]
    span = max(hi - lo, 1e-300)
    if kind == "flat":
        return np.ones_like(k, dtype=complex)
    if kind == "gaussian":
        mid = 0.5 * (lo + hi)
        return np.exp(-0.5 * ((k - mid) / (width * span)) ** 2).astype(complex)
    t = (k - lo) / span
    out = np.full_like(k, 0.5, dtype=complex)
    for m in range(1, 5):
        a, b = rng.standard_normal(2) / m**2
        out = out + (a + 1j * b) * np.sin(m * np.pi * t + rng.uniform(0, 2 * np.pi))
    return out


def make_wavepacket(
    table: DispersionTable,
    window: Window,
    profile: str = "flat",
    seed: int = 0,
    n_nodes: int = K_NODES,
    width: float = 0.15,
    levels: Sequence[int] | None = None,
    workers: int | None = None,
) -> WavePacket:
    """Normalised packet with amplitudes supported on the preimages of the window.

    ``flat`` is constant on the union of preimages, ``gaussian`` is centred at each
    preimage midpoint with standard deviation ``width`` times its length, ``custom``
    is a seeded random smooth profile.
    """
    if profile not in PROFILES:
        raise InvalidArgument(f"profile must be one of {PROFILES}")
    if n_nodes < 2:
        raise InvalidArgument("need at least two k-nodes per level")
    js = range(min(window.n + 1, table.n_levels)) if levels is None else levels
    pre = [invert_dispersion(table, j, window) for j in js]
    pre = [p for p in pre if not p.empty and p.length > 0]
    if not pre:
        raise EmptyWindow("every preimage of the window is empty")
    disjoint = True
    if len(pre) > 1:
        disjoint = check_disjointness(table, window)["disjoint"]
    rng = np.random.default_rng(seed)
    jobs = []
    grids = []
    for p in pre:
        k = np.linspace(p.k_c, p.k_a, n_nodes)
        grids.append((p.j, k))
        jobs += [(p.j, kk) for kk in k]
    data = ordered_map(lambda job: _fiber_scalars(table, job[0], float(job[1])), jobs, workers)
    lvls = []
    pos = 0
    for j, k in grids:
        rows = np.array(data[pos: pos + k.size])
        pos += k.size
        beta = _profile(profile, k, rng, width)
        lvls.append(LevelPacket(j, k, beta, trapezoid_weights(k), rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3]))
    wp = WavePacket(window, table.spec, table.field, tuple(lvls), profile, seed, table, disjoint)
    return normalise(wp)


def normalise(wp: WavePacket) -> WavePacket:
    s = 1.0 / math.sqrt(wp.norm2)
    return replace(wp, levels=tuple(replace(lv, beta=lv.beta * s) for lv in wp.levels))


def _check_cross_terms(wp: WavePacket, force: bool) -> None:
    if len(wp.levels) > 1 and not wp.disjoint and not force:
        raise CrossTermRisk("preimages overlap; cross terms between levels are not accounted for")


def current_expectation_slope(wp: WavePacket, force: bool = False) -> float:
    """<psi, V_y psi> = 1/2 sum_j int |beta_j|^2 omega_j' dk, with eigenvalue-difference slopes."""
    _check_cross_terms(wp, force)
    return 0.5 * sum(lv.integral(lv.slope_fd) for lv in wp.levels)


def current_expectation_direct(wp: WavePacket, force: bool = False) -> float:
    """<psi, V_y psi> = sum_j int |beta_j|^2 int (k - Bx) phi_j^2 dx dk."""
    _check_cross_terms(wp, force)
    return sum(lv.integral(lv.velocity) for lv in wp.levels)


def evolve(wp: WavePacket, t: float) -> WavePacket:
    """beta_j(k) -> exp(-i omega_j(k) t) beta_j(k)."""
    if t == 0:
        return wp
    lv = tuple(replace(l, beta=np.exp(-1j * l.omega * t) * l.beta) for l in wp.levels)
    return replace(wp, levels=lv, time=wp.time + t)


# --- sharp-step certificates ------------------------------------------------------


def _sharp_preconditions(wp: WavePacket) -> None:
    if wp.spec.family != "sharp":
        raise UnsupportedFamily("this certificate is stated for the sharp step")
    n, B = wp.window.n, wp.field.B
    if not wp.spec.amplitude > (2 * n + 3) * B:
        raise InvalidArgument(f"need V0 > (2n+3)B = {(2 * n + 3) * B}, got {wp.spec.amplitude}")
    if len(wp.levels) > 1 and not wp.disjoint:
        raise InvalidArgument("preimages are not disjoint")


def _params(wp: WavePacket, **extra) -> dict:
    out = {"family": wp.spec.family, "V0": wp.spec.amplitude, "B": wp.field.B,
           "n": wp.window.n, "a": wp.window.a, "c": wp.window.c,
           "profile": wp.profile, "seed": wp.seed}
    out.update(extra)
    return out


def certify_theorem21(wp: WavePacket) -> list[Certificate]:
    """Current lower bound with the window integrand, its flat-window corollary and a constant check.

    The third record compares the integrand constant with the one obtained from the
    trace lower bound combined with the slope-trace identity; it is diagnostic only.
    """
    _sharp_preconditions(wp)
    n, B, V0 = wp.window.n, wp.field.B, wp.spec.amplitude
    agg = hermite_sup(n).aggregate
    En, En1 = wp.field.landau_level(n), wp.field.landau_level(n + 1)
    lhs = -current_expectation_direct(wp)
    pref = math.sqrt(math.pi / B**7) / (16 * (n + 1) ** 2 * agg**2)
    rhs21 = pref * sum(lv.integral((1 - lv.omega / V0) * (lv.omega - En) ** 2 * (En1 - lv.omega) ** 2)
                       for lv in wp.levels)
    certs = [certify("current_lower_window", "edge-current lower bound with window integrand",
                     _params(wp), lhs, rhs21)]
    w_max = max(float(np.max(lv.omega)) for lv in wp.levels)
    cor_ok = 1 - w_max / V0 > 0.5
    Cn = corollary_constant(n)
    rhs_cor = Cn * (wp.window.a - 1) ** 2 * (3 - wp.window.c) ** 2 * math.sqrt(B) * wp.norm2
    cert = certify("current_lower_flat", "edge-current lower bound with explicit constant C_n",
                   _params(wp, C_n=Cn), lhs, rhs_cor, vacuous=not cor_ok,
                   details={"one_minus_omega_over_V0_min": 1 - w_max / V0})
    certs.append(cert)
    # trace lower bound times V0/(2B), divided by V0^2, gives the same integrand constant
    trace_route = math.sqrt(math.pi / B) / (8 * B**2 * (n + 1) ** 2 * agg**2) / (2 * B)
    certs.append(certify("constant_bookkeeping", "window-integrand constant versus trace-route constant",
                         _params(wp), pref, trace_route, diagnostic=True,
                         details={"ratio": pref / trace_route}))
    return certs


def certify_upper_bound(wp: WavePacket) -> Certificate:
    """-<psi, V_y psi> <= sqrt((2n+c)B) ||psi||^2, from |omega'| <= 2 sqrt(omega)."""
    n, B = wp.window.n, wp.field.B
    lhs = -current_expectation_direct(wp, force=True)
    rhs = math.sqrt((2 * n + wp.window.c) * B) * wp.norm2
    return certify("current_upper", "edge-current upper companion from the slope bound",
                   _params(wp), lhs, rhs, "<=")


def certify_trace_identity(wp: WavePacket, rtol: float = 1e-3) -> Certificate:
    """Worst relative gap between the slope from the trace and the slope from the velocity."""
    if wp.spec.family != "sharp":
        raise UnsupportedFamily("the trace identity is stated for the sharp step")
    V0, B = wp.spec.amplitude, wp.field.B
    worst = 0.0
    for lv in wp.levels:
        fh = 2 * lv.velocity
        tr = -(V0 / B) * lv.trace**2
        worst = max(worst, float(np.max(np.abs(tr - fh) / np.abs(fh))))
    return certify("slope_trace_identity", "slope equals -(V0/B) times the squared boundary trace",
                   _params(wp), worst, rtol, "<=")


def certify_slope_routes(wp: WavePacket, rtol: float = 1e-4) -> Certificate:
    a = current_expectation_slope(wp, force=True)
    b = current_expectation_direct(wp, force=True)
    return certify("current_two_routes", "velocity matrix element versus half the slope",
                   _params(wp), abs(a - b) / abs(b) if b else abs(a - b), rtol, "<=",
                   details={"slope_route": a, "direct_route": b})


# --- fibered perturbations --------------------------------------------------------


def perturbed_table(spec: PotentialSpec, field: FieldConfig, V1: Callable | np.ndarray,
                    base: DispersionTable, n_levels: int | None = None,
                    workers: int | None = None) -> DispersionTable:
    """Dispersion table of h0(k) + V1(x) on the k-grid and x-grid of ``base``."""
    if callable(V1):
        try:
            probe = V1(np.zeros(3), np.zeros(3))
        except TypeError:
            probe = None
        if probe is not None:
            raise UnsupportedPerturbation("V1 must depend on x only")
    tab = scan_dispersion(spec, field, base.k_grid, n_levels or base.n_levels,
                          h=base.grid.h, margin=base.margin, perturbation=V1, workers=workers)
    if tab.grid != base.grid:
        tab = _rescan_on(base, spec, field, V1, n_levels or base.n_levels, workers)
    return tab


def _rescan_on(base, spec, field, V1, n_levels, workers):
    def one(k):
        p = solve_fiber(make_problem(spec, field, k, base.grid, V1, margin=base.margin), n_levels)
        return p.omega.copy()
    om = np.array(ordered_map(one, base.k_grid, workers)).T
    return DispersionTable(spec, field, base.k_grid, om, np.full_like(om, np.nan), base.grid,
                           perturbation=V1, margin=base.margin, monotone=[True] * n_levels)


def _sup_norm(V1, grid) -> float:
    from .model import grid_nodes
    x = grid_nodes(grid)
    v = V1(x) if callable(V1) else np.asarray(V1, dtype=float)
    return float(np.max(np.abs(v)))


def outer_projection_norm2(wp: WavePacket, base: DispersionTable, workers: int | None = None) -> float:
    """||E_0(outer window) psi||^2 computed fiber by fiber against unperturbed eigenfunctions."""
    window = wp.window
    lo, hi = window.outer_bounds(wp.field.B)
    n = window.n

    def one(job):
        j, k = job
        pert = wp.table.fiber(k, j + 1)
        _, phi = pert.level(j)
        unp = solve_fiber(make_problem(base.spec, base.field, k, base.grid, margin=base.margin), n + 1)
        tot = 0.0
        for l in range(n + 1):
            if lo <= unp.omega[l] <= hi:
                tot += integrate(unp.phi[l] * phi, unp.grid) ** 2
        return tot

    total = 0.0
    for lv in wp.levels:
        frac = np.array(ordered_map(one, [(lv.j, float(k)) for k in lv.k], workers))
        total += lv.integral(frac)
    return total


def certify_theorem23(wp_perturbed: WavePacket, base: DispersionTable, V1,
                      workers: int | None = None) -> list[Certificate]:
    """Lower bound on the current of a packet built from perturbed fibers, and ||phi|| >= kappa ||psi||."""
    window = wp_perturbed.window
    if not window.has_outer:
        raise InvalidArgument("the perturbed bound needs an outer window")
    field = wp_perturbed.field
    B = field.B
    V1_sup = _sup_norm(V1, base.grid) if V1 is not None else 0.0
    kf = kappa_and_F(window, field, V1_sup)
    params = _params(wp_perturbed, a_outer=window.a_outer, c_outer=window.c_outer, V1_sup=V1_sup)
    if not kf["stable"]:
        raise StabilityFailure(f"kappa^2 = {kf['kappa2']} <= 0")
    lhs = -current_expectation_direct(wp_perturbed)
    rhs = math.sqrt(B) * kf["rhs_coefficient"] * wp_perturbed.norm2
    params.update(kappa2=kf["kappa2"], F=kf["F"], C_n=kf["C_n"])
    certs = [certify("perturbed_current_lower", "edge-current lower bound under a bounded perturbation",
                     params, lhs, rhs, vacuous=rhs <= 0,
                     details={"reason": "bound is nonpositive" if rhs <= 0 else None})]
    phi2 = outer_projection_norm2(wp_perturbed, base, workers)
    certs.append(certify("outer_projection_norm", "outer-window projection keeps a kappa fraction of the norm",
                         params, math.sqrt(phi2), kf["kappa"] * math.sqrt(wp_perturbed.norm2)))
    return certs


# --- localisation -------------------------------------------------------------------


def localization_mass(wp: WavePacket, alpha: float, beta: float, workers: int | None = None) -> dict:
    """Mass of the packet outside [-B^(-beta), B^alpha], fiber by fiber."""
    if not alpha > -0.5 or not beta > 0:
        raise InvalidArgument("need alpha > -1/2 and beta > 0")
    n, B = wp.window.n, wp.field.B
    need = (2 * n + wp.window.c) * B + B ** (2 * (2 * alpha + beta + 1))
    if wp.spec.amplitude < need:
        raise InvalidArgument(f"need V0 >= (2n+c)B + B^(2(2 alpha+beta+1)) = {need}")
    lo, hi = -(B ** -beta), B**alpha
    grid = wp.table.grid
    if not (grid.x_min <= lo and hi <= grid.x_max):
        raise CoverageInsufficient(f"interval [{lo}, {hi}] leaves the grid [{grid.x_min}, {grid.x_max}]")

    def one(job):
        j, k = job
        pairs = wp.table.fiber(k, j + 1)
        _, phi = pairs.level(j)
        x = pairs.x
        inside = integrate(np.where((x >= lo) & (x <= hi), phi**2, 0.0), pairs.grid)
        return 1.0 - inside

    outside = 0.0
    for lv in wp.levels:
        vals = np.array(ordered_map(one, [(lv.j, float(k)) for k in lv.k], workers))
        outside += lv.integral(vals)
    return {"B": B, "alpha": alpha, "beta": beta, "interval": [lo, hi],
            "outside": outside, "inside": wp.norm2 - outside, "V0_required": need}


def fit_localization(rows: Sequence[dict]) -> dict:
    """Fit log(outside) = log C - K B^(2 alpha + 1) over a B-ladder."""
    if len(rows) < 2:
        raise InvalidArgument("need at least two ladder rows")
    alpha = rows[0]["alpha"]
    t = np.array([r["B"] ** (2 * alpha + 1) for r in rows])
    y = np.log(np.array([r["outside"] for r in rows]))
    slope, icpt = np.polyfit(t, y, 1)
    masses = [r["outside"] for r in rows]
    return {"K": float(-slope), "C": float(math.exp(icpt)),
            "strictly_decreasing": bool(all(b < a for a, b in zip(masses, masses[1:])))}


# --- B scaling ----------------------------------------------------------------------


def b_scaling_study(
    family: str,
    amplitude_per_B: float,
    window: Window,
    B_list: Sequence[float],
    k_points: int = 61,
    h: float = 0.0025,
    n_nodes: int = K_NODES,
    workers: int | None = None,
) -> dict:
    """Flat-packet current over a B-ladder with V0 = amplitude_per_B * B, and its log-log slope.

    The grid spacing scales as h / sqrt(B), so every rung is resolved in magnetic lengths.
    """
    Bs = [float(b) for b in B_list]
    if len(Bs) < 3:
        raise InvalidArgument("need at least three values of B")
    rows = []
    for B in Bs:
        spec = PotentialSpec(family, amplitude_per_B * B) if family != "none" else PotentialSpec("none")
        fld = FieldConfig(B)
        sb = math.sqrt(B)
        tab = scan_dispersion(spec, fld, np.linspace(-3 * sb, 6 * sb, k_points), window.n + 1,
                              h=h / sb, workers=workers)
        try:
            wp = make_wavepacket(tab, window, "flat", n_nodes=n_nodes, workers=workers)
            cur = -current_expectation_direct(wp)
        except EmptyWindow:
            cur = 0.0
        rows.append({"B": B, "V0": spec.amplitude, "current": cur})
    cur = np.array([r["current"] for r in rows])
    if np.any(cur <= 0):
        return {"rows": rows, "exponent": None, "residual": None, "degenerate": True}
    x, y = np.log(Bs), np.log(cur)
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(Bs))) if res.size else 0.0
    return {"rows": rows, "exponent": float(coef[0]), "residual": resid, "degenerate": False}


# --- soft potentials ------------------------------------------------------------------


def _hypotheses_ok(report: HypothesisReport, hypothesis: str) -> bool:
    if not (report.satisfiable and report.H1):
        return False
    return report.H2 if hypothesis == "H2" else bool(report.H2p)


def soft_bound_data(wp: WavePacket, eps: float, report: HypothesisReport, hypothesis: str = "H2",
                    workers: int | None = None) -> dict:
    """Restricted Hermite aggregates over the packet momenta and the ratio integral sum int |beta|^2 V~/V^2."""
    spec, field, window = wp.spec, wp.field, wp.window
    n = window.n
    x_eps = report.x_eps
    ks = [float(k) for lv in wp.levels for k in lv.k]
    sups = ordered_map(lambda k: restricted_sups(n, field, k, x_eps), ks, workers)
    H_agg = max(s["H_agg"] for s in sups)
    Ht_agg = max(s["H_tilde_agg"] for s in sups)
    ratio_int = 0.0
    ratios = []
    for lv in wp.levels:
        def one(i, lv=lv):
            k, w = float(lv.k[i]), float(lv.omega[i])
            C_k = default_h2p_constant(spec, field, n, window.c, eps, k, x_eps) if hypothesis == "H2'" else None
            return soft_integrals_at(spec, field, eps, report, k, w, hypothesis, C_k).ratio
        r = np.array(ordered_map(one, range(lv.k.size), workers))
        ratios.append(r)
        ratio_int += lv.integral(r)
    return {"H_agg": H_agg, "H_tilde_agg": Ht_agg, "ratio_integral": ratio_int,
            "ratio_min": float(min(r.min() for r in ratios)),
            "ratio_max": float(max(r.max() for r in ratios))}


def certify_theorem61(wp: WavePacket, eps: float, report: HypothesisReport, hypothesis: str = "H2",
                      workers: int | None = None) -> list[Certificate]:
    """Soft-potential current lower bound, plus the turning-point smallness condition."""
    if not _hypotheses_ok(report, hypothesis):
        raise InvalidArgument(f"(H1)+({hypothesis}) are not certified")
    if abs(report.eps - eps) > 1e-15 or report.n != wp.window.n or abs(report.c - wp.window.c) > 1e-15:
        raise InvalidArgument("hypothesis report was made for a different (n, c, eps)")
    if len(wp.levels) > 1 and not wp.disjoint:
        raise InvalidArgument("preimages are not disjoint")
    window, B = wp.window, wp.field.B
    data = soft_bound_data(wp, eps, report, hypothesis, workers)
    tp = turning_point_condition(window, wp.field, eps, report.x_eps, data["H_agg"])
    params = _params(wp, eps=eps, hypothesis=hypothesis, x_eps=report.x_eps,
                     rate=wp.spec.rate)
    tp_cert = certify("turning_point_smallness", "turning point close enough to the edge",
                      params, tp["minus_x_eps"], tp["bound"], "<=")
    if not tp["holds"]:
        raise InvalidArgument(f"turning-point condition fails: {tp}")
    Cne = soft_constant(window.n, data["H_tilde_agg"])
    lhs = -current_expectation_direct(wp)
    rhs = Cne * (window.a - 1) ** 2 * (window.c - 3) ** 2 * data["ratio_integral"] * math.sqrt(B)
    params.update(C_n_eps=Cne)
    main = certify("soft_current_lower", "soft-potential edge-current lower bound", params, lhs, rhs,
                   details=data)
    return [tp_cert, main]


def certify_theorem62(wp_perturbed: WavePacket, base: DispersionTable, V1, eps: float,
                      report: HypothesisReport, hypothesis: str = "H2",
                      workers: int | None = None) -> list[Certificate]:
    """Perturbed soft-potential bound; vacuous when its coefficient condition or sign fails."""
    window = wp_perturbed.window
    if not window.has_outer:
        raise InvalidArgument("the perturbed bound needs an outer window")
    if not _hypotheses_ok(report, hypothesis):
        raise InvalidArgument(f"(H1)+({hypothesis}) are not certified")
    field, B = wp_perturbed.field, wp_perturbed.field.B
    V1_sup = _sup_norm(V1, base.grid) if V1 is not None else 0.0
    data = soft_bound_data(wp_perturbed, eps, report, hypothesis, workers)
    Cne = soft_constant(window.n, data["H_tilde_agg"])
    Fe = F_eps(window, field, V1_sup, Cne)
    geo = (3 - window.c_outer) ** 2 * (window.a_outer - 1) ** 2
    phi2 = outer_projection_norm2(wp_perturbed, base, workers)
    # coefficient condition, evaluated with the packet's own momenta
    cond_lhs = data["ratio_integral"] * phi2 / wp_perturbed.norm2
    cond = cond_lhs >= 0.5 * phi2
    lhs = -current_expectation_direct(wp_perturbed)
    rhs = math.sqrt(B) * (0.5 * Cne * geo - Fe) * wp_perturbed.norm2
    params = _params(wp_perturbed, eps=eps, V1_sup=V1_sup, C_n_eps=Cne, F_eps=Fe)
    return [
        certify("soft_coefficient_condition", "weighted ratio integral dominates half the projected norm",
                params, cond_lhs, 0.5 * phi2, diagnostic=True),
        certify("soft_perturbed_current_lower", "soft-potential edge-current lower bound under perturbation",
                params, lhs, rhs, vacuous=(rhs <= 0 or not cond),
                details={"condition_holds": bool(cond), "bound_positive": rhs > 0}),
    ]
