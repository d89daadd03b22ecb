"""Closed-form constants and pointwise eigenfunction bounds.

Constants: Hermite sups, the current constants C_n and C_{n,eps}, the stability
pair (kappa, F). Pointwise results: exponential decay behind a sharp step, the
two-sided envelopes for solutions of psi'' = W psi, and the soft-potential
integrals V_{j,eps}, V~_{j,eps}.

Pointwise certificates compare logarithms, so deep tails never underflow. They
are judged on the nodes where the computed eigenfunction sits above the
eigensolver noise floor ``NOISE_FLOOR * max|phi|``; further left the vector holds
round-off and the artificial truncation wall, not the eigenfunction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize_scalar

from .certificates import Certificate, certify
from .errors import HypothesisViolation, InvalidArgument, TruncationFailure, UnsupportedFamily
from .model import (
    FieldConfig,
    HypothesisReport,
    PotentialSpec,
    confining_derivative,
    b_v0,
    eval_confining,
    lambda_n,
)
from .numerics import cumulative_integral, hermite_gaussian_array, integrate, oscillator_functions
from .spectra import FiberEigenpairs, Window

MAX_SUP_ORDER = 20
SUP_XTOL = 1e-10
NOISE_FLOOR = 1e-12
TAIL_CUTOFF = 1e-16


# --- Hermite sups and current constants ------------------------------------------


def _hermite_bracket(m: int) -> float:
    return math.sqrt(4 * m + 8)


def _maximise(fn, lo: float, hi: float, n_grid: int = 4001) -> tuple[float, float]:
    """Max of a smooth scalar function on [lo, hi]: grid scan then bounded Brent refinement."""
    if hi <= lo:
        return float(fn(np.array([lo]))[0]), lo
    u = np.linspace(lo, hi, n_grid)
    vals = fn(u)
    i = int(np.argmax(vals))
    best, arg = float(vals[i]), float(u[i])
    a, b = u[max(i - 1, 0)], u[min(i + 1, n_grid - 1)]
    if b > a:
        res = minimize_scalar(lambda t: -float(fn(np.array([t]))[0]), bounds=(a, b),
                              method="bounded", options={"xatol": SUP_XTOL})
        if -res.fun > best:
            best, arg = float(-res.fun), float(res.x)
    return best, arg


def _check_order(n: int) -> None:
    if int(n) != n or not 0 <= n <= MAX_SUP_ORDER:
        raise InvalidArgument(f"n must be an integer in [0, {MAX_SUP_ORDER}], got {n}")


@dataclass(frozen=True)
class HermiteSups:
    """``values[m] = sup_u H_m(u) exp(-u^2/2)`` and the aggregate ``(sum values^2 / (2^m m!))^(1/2)``."""

    n: int
    values: tuple
    aggregate: float


def hermite_sup(n: int) -> HermiteSups:
    _check_order(n)
    vals = []
    for m in range(n + 1):
        r = _hermite_bracket(m)
        best, _ = _maximise(lambda u, m=m: hermite_gaussian_array(m, u), -r, r)
        vals.append(best)
    agg = math.sqrt(sum(v * v / (2.0**m * math.factorial(m)) for m, v in enumerate(vals)))
    return HermiteSups(n, tuple(vals), agg)


def cs_envelope(sups: Sequence[float]) -> float:
    """Cauchy-Schwarz aggregate ``(sum_m sups[m]^2 / (2^m m!))^(1/2)``."""
    return math.sqrt(sum(s * s / (2.0**m * math.factorial(m)) for m, s in enumerate(sups)))


def corollary_constant(n: int) -> float:
    """C_n = sqrt(pi) / (2^5 (n+1)^2 H^(n)^2)."""
    agg = hermite_sup(n).aggregate
    return math.sqrt(math.pi) / (32.0 * (n + 1) ** 2 * agg**2)


def soft_constant(n: int, ht_agg: float) -> float:
    """C_{n,eps} = sqrt(pi) / (2^5 (n+1)^2 H~_{n,eps}^2)."""
    if not ht_agg > 0:
        raise InvalidArgument("restricted Hermite aggregate must be positive")
    return math.sqrt(math.pi) / (32.0 * (n + 1) ** 2 * ht_agg**2)


def _deviation(window: Window, V1_sup: float, B: float) -> float:
    return (window.c - window.a) / 2.0 + V1_sup / B


def kappa_and_F(window: Window, field: FieldConfig, V1_sup: float, n: int | None = None) -> dict:
    """Stability constants for a perturbation of sup-norm ``V1_sup``.

    ``kappa^2 = 1 - (2/(c~-a~))^2 ((c-a)/2 + V1_sup/B)^2``. A nonpositive kappa^2 is
    reported through ``stable = False``; F is then left undefined (nan).
    """
    if not window.has_outer:
        raise InvalidArgument("kappa needs an outer window")
    if not (math.isfinite(V1_sup) and V1_sup >= 0):
        raise InvalidArgument("V1_sup must be finite and >= 0")
    n = window.n if n is None else n
    B = field.B
    kap2 = 1.0 - (2.0 / (window.c_outer - window.a_outer)) ** 2 * _deviation(window, V1_sup, B) ** 2
    Cn = corollary_constant(n)
    geo = (3.0 - window.c_outer) ** 2 * (window.a_outer - 1.0) ** 2
    out = {"kappa2": kap2, "C_n": Cn, "outer_factor": geo, "stable": kap2 > 0}
    if kap2 <= 0:
        out.update(kappa=float("nan"), F=float("nan"), rhs_coefficient=float("nan"))
        return out
    one_minus = 1.0 - kap2
    F = (one_minus**0.25 * math.sqrt(2 * n + window.c + V1_sup / B) * (2.0 + math.sqrt(one_minus))
         + Cn * one_minus * geo)
    out.update(kappa=math.sqrt(kap2), F=F, rhs_coefficient=kap2 * (Cn * geo - F))
    return out


def F_eps(window: Window, field: FieldConfig, V1_sup: float, C_neps: float, n: int | None = None) -> float:
    """F_eps for the perturbed soft-potential bound."""
    if not window.has_outer:
        raise InvalidArgument("F_eps needs an outer window")
    n = window.n if n is None else n
    B = field.B
    r = 2.0 / (window.c_outer - window.a_outer)
    d = _deviation(window, V1_sup, B)
    geo = (3.0 - window.c_outer) ** 2 * (window.a_outer - 1.0) ** 2
    return (math.sqrt(r * d) * math.sqrt(2 * n + window.c + V1_sup / B) * (2.0 + r * d)
            + 0.5 * C_neps * r * r * d * d * geo)


# --- restricted sups ------------------------------------------------------------


def restricted_hermite_sup(m: int, field: FieldConfig, k: float, x_lo: float, x_hi: float) -> float:
    """sup over x in [x_lo, x_hi] of |H_m(sqrt(B) x - k/sqrt(B))| exp(-B/2 (x - k/B)^2).

    ``x_lo`` may be ``-inf``. Outside ``|u| <= sqrt(4m+8)`` the function is monotone in
    |u|, so the search is clipped to that bracket plus the interval end points.
    """
    if int(m) != m or not 0 <= m <= MAX_SUP_ORDER:
        raise InvalidArgument(f"m must be in [0, {MAX_SUP_ORDER}]")
    if not x_lo <= x_hi:
        raise InvalidArgument("need x_lo <= x_hi")
    sb = math.sqrt(field.B)
    u_lo = sb * x_lo - k / sb if math.isfinite(x_lo) else -math.inf
    u_hi = sb * x_hi - k / sb
    f = lambda u: np.abs(hermite_gaussian_array(m, u))
    r = _hermite_bracket(m)
    cands = []
    for u in (u_lo, u_hi):
        if math.isfinite(u):
            cands.append(float(f(np.array([u]))[0]))
    lo, hi = max(u_lo, -r), min(u_hi, r)
    if lo < hi:
        cands.append(_maximise(f, lo, hi)[0])
    return max(cands) if cands else 0.0


def restricted_sups(n: int, field: FieldConfig, k: float, x_eps: float) -> dict:
    """H_{m,eps}(k) on [x_eps, 0] and H~_{m,eps}(k) on (-inf, x_eps], m = 0..n, with their aggregates."""
    inner = [restricted_hermite_sup(m, field, k, x_eps, 0.0) for m in range(n + 1)]
    outer = [restricted_hermite_sup(m, field, k, -math.inf, x_eps) for m in range(n + 1)]
    return {"H": inner, "H_tilde": outer,
            "H_agg": cs_envelope(inner), "H_tilde_agg": cs_envelope(outer)}


def turning_point_condition(window: Window, field: FieldConfig, eps: float, x_eps: float,
                            H_agg: float) -> dict:
    """Smallness condition on the turning point: -x_eps < ((a-1)(c-3) / (4(n+1) H (2/eps+2n+c)))^2 (pi/B)^(1/2)."""
    n, a, c = window.n, window.a, window.c
    bound = ((a - 1) * (c - 3) / (4 * (n + 1) * H_agg * (2 / eps + 2 * n + c))) ** 2 * math.sqrt(math.pi / field.B)
    return {"minus_x_eps": -x_eps, "bound": bound, "holds": bool(-x_eps < bound)}


@dataclass
class BoundConstants:
    n: int
    H_m: list
    H_n: float
    C_n: float
    kappa2: float | None = None
    kappa: float | None = None
    F: float | None = None
    eps: float | None = None
    Lambda_n: float | None = None
    B_V0: float | None = None
    M_n: float | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def bound_constants(n: int, window: Window | None = None, field: FieldConfig | None = None,
                    V1_sup: float = 0.0, spec: PotentialSpec | None = None,
                    eps: float | None = None) -> BoundConstants:
    sups = hermite_sup(n)
    out = BoundConstants(n, list(sups.values), sups.aggregate, corollary_constant(n))
    field = field or FieldConfig(1.0)
    if window is not None and window.has_outer:
        kf = kappa_and_F(window, field, V1_sup, n)
        out.kappa2, out.kappa, out.F = kf["kappa2"], kf["kappa"], kf["F"]
    if spec is not None and eps is not None and window is not None:
        out.eps = eps
        out.B_V0 = b_v0(spec, field)
        out.Lambda_n = lambda_n(spec, field, n, window.c, eps)
        out.M_n = out.Lambda_n / field.B
    return out


# --- pointwise certificates -----------------------------------------------------


def _certified_nodes(phi: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return mask & (np.abs(phi) >= NOISE_FLOOR * np.max(np.abs(phi)))


def _strictly_left(mask: np.ndarray) -> np.ndarray:
    # the anchor itself satisfies every envelope with equality
    out = mask.copy()
    out[-1] = False
    return out


def _log_ratio_certificate(name, ref, params, log_phi, log_lower, log_upper, x, details=None):
    """Worst ratio over nodes: max(phi/upper, lower/phi) must stay <= 1 + slack."""
    worst_up = worst_lo = -math.inf
    x_up = x_lo = None
    if log_upper is not None and log_phi.size:
        d = log_phi - log_upper
        i = int(np.argmax(d))
        worst_up, x_up = float(d[i]), float(x[i])
    if log_lower is not None and log_phi.size:
        d = log_lower - log_phi
        i = int(np.argmax(d))
        worst_lo, x_lo = float(d[i]), float(x[i])
    worst = max(worst_up, worst_lo)
    ratio = math.exp(worst) if math.isfinite(worst) else 0.0
    det = {"nodes": int(log_phi.size),
           "worst_upper_ratio": math.exp(worst_up) if math.isfinite(worst_up) else None,
           "worst_upper_x": x_up,
           "worst_lower_ratio": math.exp(worst_lo) if math.isfinite(worst_lo) else None,
           "worst_lower_x": x_lo}
    det.update(details or {})
    return certify(name, ref, params, ratio, 1.0, "<=", vacuous=log_phi.size == 0, details=det)


def decay_certificate(pairs: FiberEigenpairs, j: int, spec: PotentialSpec, field: FieldConfig) -> Certificate:
    """phi_j(-d)^2 <= phi_j(0)^2 exp(-sqrt(2 (V0 - omega_j)) d) behind a sharp step."""
    if spec.family != "sharp":
        raise UnsupportedFamily("the step decay bound needs the sharp family")
    w, phi = pairs.level(j)
    if not spec.amplitude > w:
        raise InvalidArgument(f"need V0 > omega_j, got V0={spec.amplitude}, omega={w}")
    x = pairs.x
    e = int(np.argmin(np.abs(x)))
    p0 = phi[e]
    params = {"k": pairs.k, "j": j, "V0": spec.amplitude, "B": field.B, "omega": w}
    ref = "exponential decay of the eigenfunction behind a sharp step"
    if p0**2 <= 1e-14:
        return certify("step_decay", ref, params, 0.0, 1.0, "<=", vacuous=True,
                       details={"reason": "trace phi_j(0)^2 below 1e-14"})
    mask = _certified_nodes(phi, x < 0) & (phi > 0)
    delta = -x[mask]
    log_phi2 = 2 * np.log(phi[mask])
    log_bound = 2 * math.log(abs(p0)) - math.sqrt(2 * (spec.amplitude - w)) * delta
    cert = _log_ratio_certificate("step_decay", ref, params, log_phi2, None, log_bound, x[mask],
                                  {"sign_changes": int(np.sum(phi[_certified_nodes(phi, x < 0)] <= 0))})
    if cert.details["sign_changes"]:
        return certify("step_decay", ref, params, math.inf, 1.0, "<=", details=cert.details)
    return cert


@dataclass(frozen=True)
class Envelope:
    """Exponential envelopes for psi'' = W psi on the nodes x <= x0."""

    x: np.ndarray
    x0: float
    psi_x0: float
    W: np.ndarray
    S: np.ndarray | None
    log_lower: np.ndarray | None
    log_upper: np.ndarray

    @property
    def lower(self) -> np.ndarray | None:
        return None if self.log_lower is None else np.exp(self.log_lower)

    @property
    def upper(self) -> np.ndarray:
        return np.exp(self.log_upper)


def _from_right(samples: np.ndarray, x: np.ndarray) -> np.ndarray:
    """int_x^{x_end} f on (possibly nonuniform) ascending nodes."""
    c = cumulative_trapezoid(samples, x, initial=0.0)
    return c[-1] - c


def s_function(W: np.ndarray, dW: np.ndarray, h: float) -> np.ndarray:
    """S(t) = W(t) - int_{-inf}^t W'(u) exp(-2 int_u^t sqrt(W)) du on a uniform grid.

    The integral I(t) obeys I(t+h) = I(t) e^{-2 int_t^{t+h} sqrt W} + (local term), so one
    left-to-right sweep suffices. The sweep starts at the first node with I = 0.
    """
    s = np.sqrt(W)
    decay = np.exp(-h * (s[1:] + s[:-1]))
    I = np.zeros_like(W)
    for i in range(1, W.size):
        I[i] = (I[i - 1] + 0.5 * h * dW[i - 1]) * decay[i - 1] + 0.5 * h * dW[i]
    return W - I


def envelope_appendix2(
    W: np.ndarray,
    x: np.ndarray,
    x0: float,
    psi_x0: float,
    mode: str = "general",
    W_inf: float | None = None,
    dW: np.ndarray | None = None,
) -> Envelope:
    """Envelopes from the anchor ``x0`` leftwards.

    ``W`` and ``x`` are samples on uniform ascending nodes; only nodes ``x <= x0`` are
    used and the last of them is taken as the anchor. ``general`` gives
    ``psi(x0) exp(-int sqrt S) <= psi <= psi(x0) exp(-int sqrt W)`` (needs W' <= 0);
    ``bounded_below`` gives the upper envelope ``psi(x0) exp(-sqrt(W_inf) (x0 - x))``.
    """
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    if W.shape != x.shape:
        raise InvalidArgument("W and x must have the same shape")
    if not psi_x0 > 0:
        raise InvalidArgument("anchor value must be positive")
    keep = x <= x0 + 1e-12 * max(1.0, abs(x0))
    xs, Ws = x[keep], W[keep]
    if xs.size < 2:
        raise InvalidArgument("need at least two nodes left of the anchor")
    if np.any(Ws <= 0):
        raise InvalidArgument("W must be positive left of the anchor")
    h = xs[1] - xs[0]
    anchor = xs[-1]
    if mode == "bounded_below":
        if W_inf is None or not W_inf > 0:
            raise InvalidArgument("bounded_below mode needs W_inf > 0")
        log_up = math.log(psi_x0) - math.sqrt(W_inf) * (anchor - xs)
        return Envelope(xs, anchor, psi_x0, Ws, None, None, log_up)
    if mode != "general":
        raise InvalidArgument(f"unknown envelope mode {mode!r}")
    d = np.gradient(Ws, h, edge_order=2) if dW is None else np.asarray(dW, dtype=float)[keep]
    scale = max(np.max(np.abs(d)), 1e-300)
    if np.any(d > 1e-9 * scale):
        raise HypothesisViolation("W' > 0 left of the anchor; the general envelope needs W' <= 0")
    S = s_function(Ws, d, h)
    log_up = math.log(psi_x0) - _from_right(np.sqrt(Ws), xs)
    log_lo = math.log(psi_x0) - _from_right(np.sqrt(S), xs)
    return Envelope(xs, anchor, psi_x0, Ws, S, log_lo, log_up)


def _confining_left(spec: PotentialSpec, x: np.ndarray, B: float) -> np.ndarray:
    # left limit, so the sharp step node carries the barrier height
    return np.asarray(eval_confining(spec, np.nextafter(x, -np.inf), B))


def effective_potential(spec: PotentialSpec, field: FieldConfig, k: float, omega: float,
                        x: np.ndarray) -> np.ndarray:
    """W(x;k) = (Bx - k)^2 + V0(x^-) - omega."""
    x = np.asarray(x, dtype=float)
    return (field.B * x - k) ** 2 + _confining_left(spec, x, field.B) - omega


def _effective_derivative(spec: PotentialSpec, field: FieldConfig, k: float, x: np.ndarray) -> np.ndarray:
    return 2 * field.B * (field.B * x - k) + np.asarray(confining_derivative(spec, np.nextafter(x, -np.inf), field.B))


def _anchor_index(x: np.ndarray, x0: float) -> int:
    idx = np.nonzero(x <= x0 + 1e-12 * max(1.0, abs(x0)))[0]
    if idx.size == 0:
        raise InvalidArgument("anchor left of the grid")
    return int(idx[-1])


def _default_anchor(spec, field, k, omega, x) -> int:
    i_max = _anchor_index(x, min(0.0, k / field.B))
    W = effective_potential(spec, field, k, omega, x[: i_max + 1])
    bad = np.nonzero(W <= 0)[0]
    i0 = i_max if bad.size == 0 else int(bad[0]) - 1
    if i0 < 1:
        raise InvalidArgument("no classically forbidden region left of the edge")
    return i0


def appendix2_certificate(pairs: FiberEigenpairs, j: int, spec: PotentialSpec, field: FieldConfig,
                          x0: float | None = None, mode: str = "general") -> Certificate:
    """Check the computed eigenfunction against the envelopes of ``envelope_appendix2``.

    The anchor defaults to the last node left of ``min(0, k/B)`` (where W' <= 0 for every
    family) that still has W > 0 on all nodes to its left.
    """
    w, phi = pairs.level(j)
    x = pairs.x
    B = field.B
    if x0 is None:
        i0 = _default_anchor(spec, field, pairs.k, w, x)
    else:
        i0 = _anchor_index(x, x0)
    xs = x[: i0 + 1]
    W = effective_potential(spec, field, pairs.k, w, xs)
    params = {"k": pairs.k, "j": j, "family": spec.family, "B": B, "x0": float(x[i0]), "mode": mode}
    ref = "two-sided exponential envelope for solutions of psi'' = W psi"
    if np.any(W <= 0) or phi[i0] <= 0:
        raise InvalidArgument("anchor is not in the classically forbidden region")
    dW = _effective_derivative(spec, field, pairs.k, xs)
    W_inf = float(np.min(W)) if mode == "bounded_below" else None
    env = envelope_appendix2(W, xs, float(x[i0]), float(phi[i0]), mode, W_inf=W_inf, dW=dW)
    mask = _strictly_left(_certified_nodes(phi[: i0 + 1], np.ones(i0 + 1, bool)))
    if np.any(phi[: i0 + 1][mask] <= 0):
        return certify("envelope_sandwich", ref, params, math.inf, 1.0, "<=",
                       details={"reason": "eigenfunction changes sign in the forbidden region"})
    lp = np.log(phi[: i0 + 1][mask])
    lo = None if env.log_lower is None else env.log_lower[mask]
    s_ok = True if env.S is None else bool(np.all(env.S >= env.W * (1 - 1e-12)))
    return _log_ratio_certificate("envelope_sandwich", ref, params, lp, lo, env.log_upper[mask],
                                  xs[mask], {"S_ge_W": s_ok, "W_inf": W_inf})


def envelope_appendix3(
    pairs: FiberEigenpairs,
    j: int,
    spec: PotentialSpec,
    field: FieldConfig,
    eps: float,
    hypothesis: str,
    report: HypothesisReport | None,
    c: float | None = None,
) -> Certificate:
    """Soft-potential sandwich anchored at the turning point x_eps.

    ``H2``:  psi(x0) e^{-(1+eps) int sqrt W} <= phi <= psi(x0) e^{-sqrt(2B/eps)(x0-x)}.
    ``H2'``: psi(x0) e^{-(1+C_k eps/B) int sqrt W} <= phi <= psi(x0) e^{-int sqrt W}.
    """
    if report is None:
        raise InvalidArgument("a hypothesis report is required")
    if hypothesis not in ("H2", "H2'"):
        raise InvalidArgument("hypothesis must be 'H2' or \"H2'\"")
    ok = report.H1 and (report.H2 if hypothesis == "H2" else bool(report.H2p))
    if not ok:
        raise InvalidArgument(f"hypotheses (H1)+({hypothesis}) are not certified: {report.to_dict()}")
    w, phi = pairs.level(j)
    B = field.B
    n = report.n
    c = report.c if c is None else c
    if w > (2 * n + c) * B * (1 + 1e-8):
        raise InvalidArgument("the envelope needs omega_j <= (2n+c)B")
    x = pairs.x
    i0 = _anchor_index(x, report.x_eps)
    xs = x[: i0 + 1]
    W = effective_potential(spec, field, pairs.k, w, xs)
    if np.any(W <= 0) or phi[i0] <= 0:
        raise InvalidArgument("anchor is not in the classically forbidden region")
    root = np.sqrt(W)
    R = _from_right(root, xs)
    lp0 = math.log(phi[i0])
    params = {"k": pairs.k, "j": j, "family": spec.family, "B": B, "eps": eps,
              "hypothesis": hypothesis, "x0": float(x[i0])}
    if hypothesis == "H2":
        factor = 1.0 + eps
        log_up = lp0 - math.sqrt(2 * B / eps) * (xs[-1] - xs)
        ref = "soft-potential envelope under (H1) and (H2)"
    else:
        C_k = default_h2p_constant(spec, field, n, c, eps, pairs.k, report.x_eps)
        params["C_k"] = C_k
        factor = 1.0 + C_k * eps / B
        log_up = lp0 - R
        ref = "soft-potential envelope under (H1) and (H2')"
    log_lo = lp0 - factor * R
    mask = _strictly_left(_certified_nodes(phi[: i0 + 1], np.ones(i0 + 1, bool)))
    if np.any(phi[: i0 + 1][mask] <= 0):
        return certify("soft_envelope", ref, params, math.inf, 1.0, "<=",
                       details={"reason": "eigenfunction changes sign in the forbidden region"})
    return _log_ratio_certificate("soft_envelope", ref, params, np.log(phi[: i0 + 1][mask]),
                                  log_lo[mask], log_up[mask], xs[mask])


def h2p_constant(spec: PotentialSpec, field: FieldConfig, n: int, c: float, eps: float,
                 k: float, x: np.ndarray) -> float:
    """Smallest C_k with -C_k sqrt((Bt-k)^2 + V0 - (2n+c)B) <= V0' + 2B(Bt-k) on the nodes ``x``."""
    B = field.B
    wp = np.asarray(confining_derivative(spec, x, B)) + 2 * B * (B * x - k)
    wc = (B * x - k) ** 2 + np.asarray(eval_confining(spec, x, B)) - (2 * n + c) * B
    if np.any(wc <= 0) or np.any(wp > 0):
        raise HypothesisViolation("(H2') fails at this k")
    return float(np.max(-wp / np.sqrt(wc))) if x.size else 0.0


# --- projections and traces -----------------------------------------------------


def oscillator_overlaps(pairs: FiberEigenpairs, j: int, m_max: int) -> np.ndarray:
    """alpha_m = <phi_j, psi_m>, m = 0..m_max, against the analytic oscillator functions."""
    _, phi = pairs.level(j)
    psi = oscillator_functions(m_max, pairs.x, pairs.B, pairs.k)
    return np.array([integrate(phi * psi[m], pairs.grid) for m in range(m_max + 1)])


def projection_bounds(pairs: FiberEigenpairs, j: int, window: Window, field: FieldConfig,
                      spec: PotentialSpec, diagnostic: bool = False, completeness_order: int = 40) -> dict:
    """Lower bounds on the low-oscillator weight of phi_j and on <phi_j, V0 P_n phi_j>."""
    n = window.n
    B = field.B
    w, phi = pairs.level(j)
    lo, hi = window.bounds(B)
    inside = lo - 1e-8 * B <= w <= hi + 1e-8 * B and j <= n
    if not inside and not diagnostic:
        raise InvalidArgument(f"omega_{j}(k)={w} is outside the window {lo, hi}")
    alpha = oscillator_overlaps(pairs, j, max(n, completeness_order))
    weight = float(np.sum(alpha[: n + 1] ** 2))
    psi = oscillator_functions(n, pairs.x, B, pairs.k)
    v0 = np.asarray(eval_confining(spec, pairs.x, B))
    if spec.family == "sharp":
        # half-height at the step node, matching the assembled operator
        v0 = v0.copy()
        v0[int(np.argmin(np.abs(pairs.x)))] = 0.5 * spec.amplitude
    pn_phi = alpha[: n + 1] @ psi
    matrix_element = integrate(phi * v0 * pn_phi, pairs.grid)
    En, En1 = field.landau_level(n), field.landau_level(n + 1)
    rhs_weight = (En1 - w) / (2 * B * (n + 1))
    rhs_matrix = (w - En) * (En1 - w) / (2 * B * (n + 1))
    params = {"k": pairs.k, "j": j, "n": n, "B": B, "omega": w}
    certs = [
        certify("oscillator_weight", "lower bound on the low oscillator weight", params,
                weight, rhs_weight, diagnostic=not inside),
        certify("projected_potential", "lower bound on the projected confining matrix element",
                params, abs(matrix_element), rhs_matrix, diagnostic=not inside),
    ]
    return {
        "alpha": alpha[: n + 1].tolist(),
        "weight": weight,
        "completeness": float(np.sum(alpha**2)),
        "matrix_element": matrix_element,
        "certificates": certs,
    }


def trace_upper_bound(field: FieldConfig, V0: float, n: int) -> float:
    """(2B/V0)^(1/2) ((2n+3)B)^(1/4)."""
    return math.sqrt(2 * field.B / V0) * ((2 * n + 3) * field.B) ** 0.25


def trace_bounds(pairs: FiberEigenpairs, j: int, spec: PotentialSpec, field: FieldConfig,
                 window: Window) -> list[Certificate]:
    """Two-sided bounds on the boundary trace phi_j(0;k) for k in the window preimage."""
    if spec.family != "sharp":
        raise UnsupportedFamily("trace bounds need the sharp family")
    n, B, V0 = window.n, field.B, spec.amplitude
    if not V0 > (2 * n + 3) * B:
        raise InvalidArgument("need V0 > (2n+3)B")
    w, _ = pairs.level(j)
    lo, hi = window.bounds(B)
    if not (lo - 1e-8 * B <= w <= hi + 1e-8 * B) or j > n:
        raise InvalidArgument(f"omega_{j}(k)={w} is outside the window")
    t = pairs.edge_value(j)
    En, En1 = field.landau_level(n), field.landau_level(n + 1)
    agg = hermite_sup(n).aggregate
    lower = (math.sqrt(math.pi / B) * (V0 - w) * (w - En) ** 2 * (En1 - w) ** 2
             / (8 * B**2 * (n + 1) ** 2 * agg**2))
    params = {"k": pairs.k, "j": j, "n": n, "B": B, "V0": V0, "omega": w}
    return [
        certify("trace_lower", "lower bound on the boundary trace", params, V0**2 * t**2, lower),
        certify("trace_upper", "upper bound on the boundary trace", params, t,
                trace_upper_bound(field, V0, n), "<="),
    ]


def trace_upper_general(pairs: FiberEigenpairs, l: int, spec: PotentialSpec, field: FieldConfig) -> list[Certificate]:
    """phi_l(0;k) <= (2B/V0)^(1/2) omega_l^(1/4) <= (2B/V0)^(1/2) ((2l+3)B + V0)^(1/4), any k."""
    if spec.family != "sharp":
        raise UnsupportedFamily("trace bounds need the sharp family")
    B, V0 = field.B, spec.amplitude
    w, _ = pairs.level(l)
    t = pairs.edge_value(l)
    pre = math.sqrt(2 * B / V0)
    params = {"k": pairs.k, "l": l, "B": B, "V0": V0, "omega": w}
    ref = "upper bound on the boundary trace at any momentum"
    return [
        certify("trace_upper_omega", ref, params, t, pre * w**0.25, "<="),
        certify("trace_upper_uniform", ref, params, pre * w**0.25, pre * ((2 * l + 3) * B + V0) ** 0.25, "<="),
    ]


# --- soft-potential integrals ----------------------------------------------------


@dataclass(frozen=True)
class SoftIntegrals:
    V: float
    V_tilde: float
    route: str
    x_eps: float
    left_end_V: float | None = None
    left_end_V_tilde: float | None = None
    jump: float = 0.0

    @property
    def ratio(self) -> float:
        return self.V_tilde / self.V**2

    def to_dict(self) -> dict:
        return dict(self.__dict__, ratio=self.ratio)


def _variation_scale(spec: PotentialSpec, field: FieldConfig, x_eps: float) -> float:
    sb = math.sqrt(field.B)
    if spec.family == "tanh":
        return 1.0 / ((spec.rate or 1.0) * sb)
    if spec.family == "exponential":
        return sb / spec.rate
    return max(abs(x_eps), 0.05 / sb)


def _left_quadrature(integrand, x_eps: float, scale: float, rate: float, B: float) -> tuple[float, float]:
    """int_{-inf}^{x_eps} integrand(x) dx on a graded grid, extended until the left tail is negligible."""
    L = 20.0 / rate
    fine_len = 50.0 * scale
    while True:
        fine = np.linspace(x_eps - min(L, fine_len), x_eps, 2001)
        if L > fine_len:
            hc = min(scale / 4, 1.0 / (40.0 * rate))
            coarse = np.linspace(x_eps - L, fine[0], max(int(math.ceil((L - fine_len) / hc)), 2) + 1)[:-1]
            x = np.concatenate([coarse, fine])
        else:
            x = fine
        y = integrand(x)
        peak = np.max(np.abs(y))
        if peak == 0 or abs(y[0]) < TAIL_CUTOFF * peak:
            return float(np.trapezoid(y, x)), float(x[0])
        L *= 2
        if L > 1e4 / math.sqrt(B):
            raise TruncationFailure("soft-potential integrand does not decay on the left")


def soft_integrals(pairs: FiberEigenpairs, j: int, spec: PotentialSpec, field: FieldConfig,
                   eps: float, report: HypothesisReport, hypothesis: str = "H2",
                   C_k: float | None = None) -> SoftIntegrals:
    """V_{j,eps}(k) and V~_{j,eps}(k) for one computed fiber; see ``soft_integrals_at``."""
    w, _ = pairs.level(j)
    return soft_integrals_at(spec, field, eps, report, pairs.k, w, hypothesis, C_k)


def soft_integrals_at(spec: PotentialSpec, field: FieldConfig, eps: float, report: HypothesisReport,
                      k: float, omega: float, hypothesis: str = "H2",
                      C_k: float | None = None) -> SoftIntegrals:
    """V_{j,eps}(k) and V~_{j,eps}(k), or their (H2') variants, at energy ``omega``.

    For the sharp step the smooth part of V~ vanishes; the jump at x_eps = 0 enters
    with weight one (the trace route), so V~ equals the barrier height.
    """
    if report is None or not report.satisfiable or not report.H1:
        raise InvalidArgument("soft integrals need a passed (H1) report")
    if hypothesis not in ("H2", "H2'"):
        raise InvalidArgument("hypothesis must be 'H2' or \"H2'\"")
    B = field.B
    w = float(omega)
    x_eps = report.x_eps
    n, c = report.n, report.c
    if hypothesis == "H2'" and C_k is None:
        C_k = default_h2p_constant(spec, field, n, c, eps, k, x_eps)
    scale = _variation_scale(spec, field, x_eps)
    x_in = np.nextafter(x_eps, -np.inf)
    root_w = lambda x: np.sqrt(np.maximum(effective_potential(spec, field, k, w, x), 0.0))
    V0 = lambda x: np.asarray(eval_confining(spec, np.minimum(x, x_in), B))
    rate_V = math.sqrt(2 * B / eps)
    rate_t = max(float(root_w(np.array([x_eps]))[0]), 1e-3 * math.sqrt(B))
    if hypothesis == "H2":
        fV = lambda x: V0(x) * np.exp(-rate_V * (x_eps - x))
        damp = 2 * (1 + eps)
        V, left_V = _left_quadrature(fV, x_eps, scale, rate_V, B)
    else:
        fV = lambda x: V0(x) * np.exp(-_from_right(root_w(x), x))
        damp = 2 * (1 + C_k * eps / B)
        V, left_V = _left_quadrature(fV, x_eps, scale, rate_t, B)
    if spec.family == "sharp":
        return SoftIntegrals(V, spec.amplitude, "trace", x_eps, left_V, None, jump=spec.amplitude)
    fVt = lambda x: -np.asarray(confining_derivative(spec, np.minimum(x, x_in), B)) \
        * np.exp(-damp * _from_right(root_w(x), x))
    Vt, left_Vt = _left_quadrature(fVt, x_eps, scale, damp * rate_t, B)
    return SoftIntegrals(V, Vt, "quadrature", x_eps, left_V, left_Vt)


def default_h2p_constant(spec: PotentialSpec, field: FieldConfig, n: int, c: float, eps: float,
                         k: float, x_eps: float) -> float:
    """Lambda_n(eps) for the parabolic family, otherwise the smallest admissible C_k on a fine left grid."""
    if spec.family == "parabolic":
        return lambda_n(spec, field, n, c, eps)
    scale = _variation_scale(spec, field, x_eps)
    span = 20.0 / math.sqrt(field.B)
    x = np.concatenate([np.linspace(x_eps - span, x_eps - 50 * scale, 4001, endpoint=False),
                        np.linspace(x_eps - 50 * scale, x_eps, 4001)[:-1]]) if span > 50 * scale \
        else np.linspace(x_eps - span, x_eps, 8001)[:-1]
    return h2p_constant(spec, field, n, c, eps, k, x)


# --- qualitative diagnostics ----------------------------------------------------


def positivity_check(pairs: FiberEigenpairs, j: int, spec: PotentialSpec, field: FieldConfig) -> dict:
    """Positive and nondecreasing toward the left turning point, on certified nodes."""
    w, phi = pairs.level(j)
    x = pairs.x
    W = effective_potential(spec, field, pairs.k, w, x)
    forb = np.nonzero(W <= 0)[0]
    if forb.size == 0:
        raise InvalidArgument("no classically allowed region on the grid")
    turn = int(forb[0])
    mask = _certified_nodes(phi, np.arange(x.size) < turn)
    idx = np.nonzero(mask)[0]
    seg = phi[idx]
    diffs = np.diff(seg)
    bad = np.nonzero(diffs < 0)[0]
    near_turn = all(idx[b + 1] >= turn - 2 for b in bad)
    return {"positive": bool(np.all(seg > 0)), "increasing": bool(bad.size <= 1 and near_turn),
            "nodes": int(idx.size), "turning_index": turn}


def energy_identity_residual(pairs: FiberEigenpairs, j: int, spec: PotentialSpec, field: FieldConfig,
                             t_nodes: Sequence[int]) -> np.ndarray:
    """psi'(t)^2 - W(t) psi(t)^2 + int_{-inf}^t W' psi^2, relative to the sum of the three magnitudes."""
    if spec.family == "sharp":
        raise UnsupportedFamily("the energy identity is checked on smooth potentials only")
    w, phi = pairs.level(j)
    x = pairs.x
    h = pairs.grid.h
    W = effective_potential(spec, field, pairs.k, w, x)
    dW = _effective_derivative(spec, field, pairs.k, x)
    dphi = np.gradient(phi, h, edge_order=2)
    cum = cumulative_integral(dW * phi**2, h)
    out = []
    for i in t_nodes:
        terms = (dphi[i] ** 2, W[i] * phi[i] ** 2, cum[i])
        out.append((terms[0] - terms[1] + terms[2]) / sum(abs(t) for t in terms))
    return np.array(out)
