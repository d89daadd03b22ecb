"""Command-line front end: ``edgecurrent {dispersion,verify,scaling,constants}``.

Runs are driven by a JSON config file validated against ``CONFIG_SCHEMA``. Outputs
are deterministic: same config and seed give byte-identical files for any worker count.
Exit codes: 0 success, 1 a certificate failed, 2 invalid config or arguments,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from .bounds import (
    appendix2_certificate,
    bound_constants,
    decay_certificate,
    envelope_appendix3,
    projection_bounds,
    trace_bounds,
)
from .certificates import Certificate, certify, report_json, summary_table
from .errors import EdgeCurrentError, InvalidArgument, NumericalFailure
from .model import (
    DEFAULT_H,
    DEFAULT_MARGIN,
    FieldConfig,
    PotentialSpec,
    check_hypotheses,
    fiber_grid,
    hypothesis_grid,
)
from .spectra import DispersionTable, Window, dirichlet_ladder, invert_dispersion, scan_dispersion
from .states import (
    b_scaling_study,
    certify_slope_routes,
    certify_theorem21,
    certify_theorem23,
    certify_theorem61,
    certify_theorem62,
    certify_trace_identity,
    certify_upper_bound,
    make_wavepacket,
    perturbed_table,
)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
ENV_OUT = "EDGECURRENT_OUT"
ENV_WORKERS = "EDGECURRENT_WORKERS"
SUITES = ("core", "decay", "soft", "dirichlet", "perturbed", "all")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["potential"],
    "properties": {
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["sharp", "parabolic", "exponential", "tanh", "monomial",
                                    "dirichlet_edge", "none"]},
                "amplitude": {"type": "number", "minimum": 0},
                "exponent": {"type": ["number", "null"]},
                "rate": {"type": ["number", "null"]},
            },
        },
        "field": {"type": "object", "additionalProperties": False,
                  "properties": {"B": _pos}},
        "window": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 0}, "a": _num, "c": _num,
                           "a_outer": {"type": ["number", "null"]},
                           "c_outer": {"type": ["number", "null"]}},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"h": _pos, "n_points": {"type": "integer", "minimum": 3},
                           "margin": _pos},
        },
        "k_scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"k_min": _num, "k_max": _num,
                           "n_points": {"type": "integer", "minimum": 2},
                           "n_levels": {"type": "integer", "minimum": 1}},
        },
        "packet": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"profile": {"enum": ["flat", "gaussian", "custom"]},
                           "nodes": {"type": "integer", "minimum": 2},
                           "width": _pos},
        },
        "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "perturbation": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {"kind": {"enum": ["cosine", "none"]},
                           "amplitude": _num, "wavenumber": _num},
        },
        "decay": {"type": "object", "additionalProperties": False,
                  "properties": {"fibers": {"type": "integer", "minimum": 1}}},
        "dirichlet": {"type": "object", "additionalProperties": False,
                      "properties": {"amplitudes": {"type": "array", "items": _pos, "minItems": 2},
                                     "h": _pos}},
        "scaling": {"type": "object", "additionalProperties": False,
                    "properties": {"B_list": {"type": "array", "items": _pos},
                                   "k_points": {"type": "integer", "minimum": 2}}},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(InvalidArgument):
    pass


@dataclass(frozen=True)
class RunConfig:
    spec: PotentialSpec
    field: FieldConfig
    window: Window
    h: float = DEFAULT_H
    n_points: int | None = None
    margin: float = DEFAULT_MARGIN
    k_min: float = -3.0
    k_max: float = 6.0
    k_points: int = 46
    n_levels: int = 1
    profile: str = "flat"
    packet_nodes: int = 201
    packet_width: float = 0.15
    eps: float = 1.0
    perturbation: dict | None = None
    decay_fibers: int = 20
    dirichlet_amplitudes: tuple = (50.0, 200.0, 800.0, 3200.0)
    dirichlet_h: float = 0.001
    scaling_B: tuple = (1.0, 4.0, 16.0)
    scaling_k_points: int = 61
    output_dir: str = "edgecurrent-out"
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def k_grid(self) -> np.ndarray:
        return np.linspace(self.k_min, self.k_max, self.k_points)

    def grid_h(self) -> float:
        """Spacing from ``h``, or from ``n_points`` over the natural fiber box."""
        if self.n_points is None:
            return self.h
        g = fiber_grid(self.spec, self.field, self.k_grid, h=DEFAULT_H, margin=self.margin)
        return (g.x_max - g.x_min) / (self.n_points - 1)

    def perturbation_fn(self) -> Callable | None:
        p = self.perturbation
        if not p or p.get("kind") == "none":
            return None
        amp = float(p.get("amplitude", 0.05)) * self.field.B
        q = float(p.get("wavenumber", 1.0))
        return lambda x: amp * np.cos(q * x)


def _schema_error(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    return f"config key {path}: {err.message}"


def parse_config(doc: dict) -> RunConfig:
    """Validate a config mapping and build a ``RunConfig``; every failure names its key."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError(_schema_error(errors[0]))
    try:
        spec = PotentialSpec.from_dict(doc["potential"])
    except InvalidArgument as exc:
        raise ConfigError(f"config key potential: {exc}") from exc
    try:
        fld = FieldConfig(doc.get("field", {}).get("B", 1.0))
    except InvalidArgument as exc:
        raise ConfigError(f"config key field.B: {exc}") from exc
    wd = {"n": 0, "a": 1.5, "c": 1.7, **doc.get("window", {})}
    try:
        window = Window(wd["n"], wd["a"], wd["c"], wd.get("a_outer"), wd.get("c_outer"))
    except InvalidArgument as exc:
        raise ConfigError(f"config key window: {exc}") from exc
    g = doc.get("grid", {})
    if "h" in g and "n_points" in g:
        raise ConfigError("config key grid: give either h or n_points, not both")
    sb = math.sqrt(fld.B)
    ks = doc.get("k_scan", {})
    k_min, k_max = ks.get("k_min", -3.0 * sb), ks.get("k_max", 6.0 * sb)
    if not k_min < k_max:
        raise ConfigError("config key k_scan: need k_min < k_max")
    pk = doc.get("packet", {})
    dr = doc.get("dirichlet", {})
    sc = doc.get("scaling", {})
    return RunConfig(
        spec=spec,
        field=fld,
        window=window,
        h=g.get("h", DEFAULT_H),
        n_points=g.get("n_points"),
        margin=g.get("margin", DEFAULT_MARGIN),
        k_min=float(k_min),
        k_max=float(k_max),
        k_points=ks.get("n_points", 46),
        n_levels=max(ks.get("n_levels", window.n + 1), window.n + 1),
        profile=pk.get("profile", "flat"),
        packet_nodes=pk.get("nodes", 201),
        packet_width=pk.get("width", 0.15),
        eps=doc.get("eps", 1.0),
        perturbation=doc.get("perturbation"),
        decay_fibers=doc.get("decay", {}).get("fibers", 20),
        dirichlet_amplitudes=tuple(float(v) for v in dr.get("amplitudes", (50, 200, 800, 3200))),
        dirichlet_h=dr.get("h", 0.001),
        scaling_B=tuple(float(v) for v in sc.get("B_list", (1, 4, 16))),
        scaling_k_points=sc.get("k_points", 61),
        output_dir=doc.get("output_dir", "edgecurrent-out"),
        seed=doc.get("seed", 0),
        raw=doc,
    )


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(doc)


# --- suites ---------------------------------------------------------------------------


def _unavailable(name: str, exc: Exception, params: dict) -> Certificate:
    """Record a sub-operation that could not run: numerical failures fail, unmet hypotheses are vacuous."""
    details = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, NumericalFailure):
        return certify(name, "sub-operation did not complete", params, math.nan, 0.0, details=details)
    return certify(name, "sub-operation not applicable", params, 0.0, 0.0, vacuous=True, details=details)


class _Context:
    """Lazily built table, packet and hypothesis report shared by the suites of one run."""

    def __init__(self, cfg: RunConfig, workers: int | None):
        self.cfg = cfg
        self.workers = workers
        self._table = None
        self._packet = None

    @property
    def params(self) -> dict:
        c = self.cfg
        return {"family": c.spec.family, "V0": c.spec.amplitude, "B": c.field.B,
                "n": c.window.n, "a": c.window.a, "c": c.window.c}

    def table(self) -> DispersionTable:
        if self._table is None:
            c = self.cfg
            self._table = scan_dispersion(c.spec, c.field, c.k_grid, c.n_levels, h=c.grid_h(),
                                          margin=c.margin, workers=self.workers)
        return self._table

    def packet(self):
        if self._packet is None:
            c = self.cfg
            self._packet = make_wavepacket(self.table(), c.window, c.profile, c.seed,
                                           n_nodes=c.packet_nodes, width=c.packet_width,
                                           workers=self.workers)
        return self._packet

    def report(self, k_samples=None):
        c = self.cfg
        grid = hypothesis_grid(c.spec, c.field, self.table().grid.x_min, c.grid_h())
        return check_hypotheses(c.spec, c.field, c.window.n, c.window.c, c.eps, grid, k_samples)


def _run(name: str, ctx: _Context, fn) -> list[Certificate]:
    try:
        out = fn()
    except EdgeCurrentError as exc:
        return [_unavailable(name, exc, ctx.params)]
    return out if isinstance(out, list) else [out]


def suite_core(ctx: _Context) -> list[Certificate]:
    certs = _run("current_lower", ctx, lambda: certify_theorem21(ctx.packet()))
    certs += _run("current_upper", ctx, lambda: certify_upper_bound(ctx.packet()))
    certs += _run("slope_trace_identity", ctx, lambda: certify_trace_identity(ctx.packet()))
    certs += _run("current_two_routes", ctx, lambda: certify_slope_routes(ctx.packet()))
    return certs


def _decay_momenta(ctx: _Context) -> list[tuple[int, float]]:
    table, window = ctx.table(), ctx.cfg.window
    pre = [invert_dispersion(table, j, window) for j in range(window.n + 1)]
    pre = [p for p in pre if not p.empty]
    if not pre:
        raise InvalidArgument("no preimage of the window to sample fibers from")
    per = max(ctx.cfg.decay_fibers // len(pre), 1)
    return [(p.j, float(k)) for p in pre for k in np.linspace(p.k_c, p.k_a, per)]


def suite_decay(ctx: _Context) -> list[Certificate]:
    cfg = ctx.cfg
    spec, fld, window = cfg.spec, cfg.field, cfg.window
    try:
        samples = _decay_momenta(ctx)
    except EdgeCurrentError as exc:
        return [_unavailable("decay_sampling", exc, ctx.params)]
    ks = [k for _, k in samples]
    report = ctx.report(ks if spec.family != "sharp" else None)
    hypothesis = "H2" if spec.family in ("sharp", "tanh") else "H2'"
    certs = []
    for j, k in samples:
        pairs = ctx.table().fiber(k, j + 1)
        if spec.family == "sharp":
            certs += _run("step_decay", ctx, lambda: decay_certificate(pairs, j, spec, fld))
            certs += _run("trace_bounds", ctx, lambda: trace_bounds(pairs, j, spec, fld, window))
        certs += _run("envelope_sandwich", ctx, lambda: appendix2_certificate(pairs, j, spec, fld))
        certs += _run("soft_envelope", ctx,
                      lambda: envelope_appendix3(pairs, j, spec, fld, cfg.eps, hypothesis, report))
        certs += _run("projection_bounds", ctx,
                      lambda: projection_bounds(pairs, j, window, fld, spec)["certificates"])
    return certs


def suite_soft(ctx: _Context) -> list[Certificate]:
    cfg = ctx.cfg

    def main():
        report = ctx.report()
        if not (report.satisfiable and report.H1):
            raise InvalidArgument(f"(H1) not certified: {report.notes}")
        hyp = "H2"
        if not report.H2:
            wp = ctx.packet()
            report = ctx.report([float(k) for lv in wp.levels for k in lv.k[:: max(lv.k.size // 10, 1)]])
            hyp = "H2'"
        return certify_theorem61(ctx.packet(), cfg.eps, report, hyp, ctx.workers)

    certs = _run("soft_current_lower", ctx, main)
    V1 = cfg.perturbation_fn()
    if V1 is not None and cfg.window.has_outer:
        def pert():
            report = ctx.report()
            pt = perturbed_table(cfg.spec, cfg.field, V1, ctx.table(), workers=ctx.workers)
            wp = make_wavepacket(pt, cfg.window, cfg.profile, cfg.seed, n_nodes=cfg.packet_nodes,
                                 width=cfg.packet_width, workers=ctx.workers)
            return certify_theorem62(wp, ctx.table(), V1, cfg.eps, report, "H2", ctx.workers)
        certs += _run("soft_perturbed_current_lower", ctx, pert)
    return certs


def suite_dirichlet(ctx: _Context) -> list[Certificate]:
    cfg = ctx.cfg

    def main():
        lad = dirichlet_ladder(cfg.field, cfg.window, cfg.dirichlet_amplitudes,
                               h=cfg.dirichlet_h, margin=cfg.margin)
        rows = lad["rows"]
        gaps = [r["gap"] for r in rows]
        p = {"B": cfg.field.B, "amplitudes": list(cfg.dirichlet_amplitudes), "k_star": lad["k_star"]}
        ref = "Dirichlet limit of the sharp-step fibers"
        diffs = [b - a for a, b in zip(gaps, gaps[1:])]
        slope = lad["gap_decay_exponent"]
        return [
            certify("dirichlet_gap_positive", ref, p, min(gaps), 0.0, slack=0.0,
                    details={"gaps": gaps}),
            certify("dirichlet_gap_decreasing", ref, p, max(diffs), 0.0, "<=", slack=0.0,
                    details={"differences": diffs}),
            certify("dirichlet_gap_decay_exponent", ref, p, slope, -0.4, "<="),
            certify("dirichlet_overlap_defect", ref, p, rows[-1]["overlap_defect"], 1e-2, "<=",
                    details={"monotone": lad["overlap_defect_monotone"],
                             "defects": [r["overlap_defect"] for r in rows]}),
            certify("dirichlet_overlap_monotone", ref, p, float(lad["overlap_defect_monotone"]), 1.0,
                    details={"left_mass": [r["left_mass"] for r in rows]}),
        ]

    return _run("dirichlet_ladder", ctx, main)


def suite_perturbed(ctx: _Context) -> list[Certificate]:
    cfg = ctx.cfg

    def main():
        V1 = cfg.perturbation_fn()
        if V1 is None:
            raise InvalidArgument("config has no perturbation block")
        if not cfg.window.has_outer:
            raise InvalidArgument("the perturbed bound needs window.a_outer and window.c_outer")
        pt = perturbed_table(cfg.spec, cfg.field, V1, ctx.table(), workers=ctx.workers)
        wp = make_wavepacket(pt, cfg.window, cfg.profile, cfg.seed, n_nodes=cfg.packet_nodes,
                             width=cfg.packet_width, workers=ctx.workers)
        return certify_theorem23(wp, ctx.table(), V1, ctx.workers)

    return _run("perturbed_current_lower", ctx, main)


SUITE_FUNCS = {"core": suite_core, "decay": suite_decay, "soft": suite_soft,
               "dirichlet": suite_dirichlet, "perturbed": suite_perturbed}


def run_suite(cfg: RunConfig, suite: str, workers: int | None = None) -> list[Certificate]:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {SUITES}")
    ctx = _Context(cfg, workers)
    names = [s for s in SUITES if s != "all"] if suite == "all" else [suite]
    certs = []
    for s in names:
        certs += SUITE_FUNCS[s](ctx)
    return certs


# --- commands -------------------------------------------------------------------------


def _out_dir(cfg: RunConfig, flag: str | None) -> Path:
    p = Path(flag or os.environ.get(ENV_OUT) or cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def cmd_dispersion(cfg: RunConfig, out: Path, workers: int | None) -> int:
    table = scan_dispersion(cfg.spec, cfg.field, cfg.k_grid, cfg.n_levels, h=cfg.grid_h(),
                            margin=cfg.margin, workers=workers)
    _write(out / "dispersion.csv", table.to_csv())
    _write(out / "dispersion.json", table.to_json())
    print(f"wrote {out / 'dispersion.csv'} and {out / 'dispersion.json'}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, suite: str, out: Path, workers: int | None) -> int:
    certs = run_suite(cfg, suite, workers)
    _write(out / "certificates.json", report_json(certs))
    print(summary_table(certs))
    return EXIT_FAILED if any(c.failed for c in certs) else EXIT_OK


def cmd_scaling(cfg: RunConfig, B_list, out: Path, workers: int | None) -> int:
    Bs = list(B_list) if B_list else list(cfg.scaling_B)
    if len(Bs) < 3:
        raise ConfigError("scaling needs at least three values of B")
    amp = cfg.spec.amplitude / cfg.field.B
    study = b_scaling_study(cfg.spec.family, amp, cfg.window, Bs, k_points=cfg.scaling_k_points,
                            h=cfg.grid_h() * math.sqrt(cfg.field.B), n_nodes=cfg.packet_nodes,
                            workers=workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["B", "V0", "current"])
    for r in study["rows"]:
        w.writerow([repr(r["B"]), repr(r["V0"]), repr(float(r["current"]))])
    _write(out / "scaling.csv", buf.getvalue())
    fit = {k: v for k, v in study.items() if k != "rows"}
    fit["B_list"] = Bs
    _write(out / "fit.json", json.dumps(fit, indent=2, sort_keys=True))
    print(json.dumps(fit, sort_keys=True))
    return EXIT_OK


def cmd_constants(cfg: RunConfig) -> int:
    consts = bound_constants(cfg.window.n, cfg.window, cfg.field, _v1_sup(cfg), cfg.spec, cfg.eps)
    print(json.dumps(consts.to_dict(), indent=2, sort_keys=True, default=float))
    return EXIT_OK


def _v1_sup(cfg: RunConfig) -> float:
    p = cfg.perturbation
    if not p or p.get("kind") == "none":
        return 0.0
    return abs(float(p.get("amplitude", 0.05))) * cfg.field.B


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgecurrent", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--workers", type=int, default=None, metavar="N")
    common.add_argument("--out", default=None, metavar="DIR")
    common.add_argument("--seed", type=int, default=None, metavar="N")
    sub = ap.add_subparsers(dest="verb", required=True)
    sub.add_parser("dispersion", parents=[common], help="scan dispersion curves")
    v = sub.add_parser("verify", parents=[common], help="run a certificate suite")
    v.add_argument("--suite", default="core", choices=SUITES)
    s = sub.add_parser("scaling", parents=[common], help="B^(1/2) scaling study")
    s.add_argument("--B", dest="B_list", type=float, nargs="+", default=None, metavar="B")
    sub.add_parser("constants", parents=[common], help="print the bound constants")
    return ap


def _workers(flag: int | None) -> int | None:
    if flag is not None:
        if flag < 1:
            raise ConfigError("--workers must be >= 1")
        return flag
    env = os.environ.get(ENV_WORKERS)
    if env:
        try:
            return max(int(env), 1)
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS} must be an integer, got {env!r}") from exc
    return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg = replace(cfg, seed=args.seed)
        workers = _workers(args.workers)
        if args.verb == "constants":
            return cmd_constants(cfg)
        out = _out_dir(cfg, args.out)
        if args.verb == "dispersion":
            return cmd_dispersion(cfg, out, workers)
        if args.verb == "verify":
            return cmd_verify(cfg, args.suite, out, workers)
        return cmd_scaling(cfg, args.B_list, out, workers)
    except NumericalFailure as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidArgument, EdgeCurrentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
