"""Command line driver: batch verification, single computations, reports.

Every randomized result printed or written by this module carries the seed
it was produced with.  Reports are JSON (or CSV with ``#`` provenance lines)
following REPORT_SCHEMA_VERSION; the layout is documented in the README.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import mpmath
import numpy as np
import scipy

from . import __version__
from .acceptance import CRITERIA, run_criterion
from .arith import format_matrix, inverse, is_odd_prime, normalize, parse_matrix
from .cosets import (
    Stabilizer,
    enumerate_ball,
    enumerate_sphere,
    hecke_cosets,
    to_coset,
)
from .errors import HeckeError, InvalidConfig, IoFailure, ParseError
from .groupoid import compose_decomposition, multiplicity_census, verify_atlas, verify_composition
from .haar import EstimatorSettings, alpha_kernel, label
from .profinite import cylinder_from_json, cylinder_to_json, nu_F
from .tree import (
    build_ball,
    export_coo_csv,
    glue_generators,
    hecke_operator,
    no_relation_check,
    psi_labeling,
    radial_vs_hecke,
    verify_provenance,
)

REPORT_SCHEMA_VERSION = "1.0"


@dataclass
class RunConfig:
    p: int = 3
    radius: int = 4
    val_cap: int = 2
    samples: int = 100_000
    truncation: float = 40.0
    seed: int = 42
    workers: int = 4
    output: str = "report.json"
    format: str = "json"
    criteria: list[int] = field(default_factory=lambda: [c.number for c in CRITERIA])

    def validate(self) -> "RunConfig":
        if not is_odd_prime(self.p):
            raise InvalidConfig(f"p must be an odd prime, got {self.p!r}")
        if self.val_cap < 0 or self.radius < self.val_cap + 1:
            raise InvalidConfig(
                f"radius must be at least val_cap + 1 (radius={self.radius}, val_cap={self.val_cap})"
            )
        if self.samples < 1 or self.workers < 1:
            raise InvalidConfig("samples and workers must be positive")
        if not self.truncation > 0:
            raise InvalidConfig("truncation radius must be positive")
        if self.format not in ("json", "csv"):
            raise InvalidConfig(f"format must be json or csv, got {self.format!r}")
        known = {c.number for c in CRITERIA}
        if not self.criteria or not set(self.criteria) <= known:
            raise InvalidConfig(f"criteria must be a nonempty subset of {sorted(known)}")
        return self

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


def provenance(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "config": asdict(cfg),
        "versions": {
            "artifact": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "mpmath": mpmath.__version__,
        },
        "platform": platform.platform(),
    }


def run_suite(cfg: RunConfig, echo=print) -> tuple[int, dict]:
    """Run the selected acceptance criteria and persist the report.

    Returns (exit status, report); the status is 1 iff some criterion failed.
    """
    cfg.validate()
    started = time.time()
    results = []
    for n in cfg.criteria:
        res = run_criterion(n, cfg)
        results.append(res)
        if echo:
            echo(res.line())
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "provenance": provenance(cfg) | {"wall_seconds": round(time.time() - started, 3)},
        "passed": all(r.ok for r in results),
        "criteria": [r.to_json() for r in results],
    }
    write_report(report, cfg.output, cfg.format)
    return (0 if report["passed"] else 1), report


def write_report(report: dict, path: str | Path, fmt: str) -> None:
    try:
        path = Path(path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        if fmt == "json":
            path.write_text(json.dumps(report, indent=2, default=str) + "\n")
            return
        with path.open("w", newline="") as fh:
            fh.write(f"# schema_version={report['schema_version']}\n")
            for key, val in report["provenance"].items():
                fh.write(f"# {key}={json.dumps(val, default=str)}\n")
            w = csv.writer(fh)
            w.writerow(["number", "title", "passed", "seconds", "limit"])
            for c in report["criteria"]:
                w.writerow([c["number"], c["title"], c["passed"], c["seconds"], c["limit"]])
    except OSError as exc:
        raise IoFailure(f"cannot write report to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# explain


def _explain_coset(text: str, p: int) -> list[str]:
    try:
        raw = [int(v) for r in text.split(";") for v in r.split(",")]
    except ValueError as exc:
        raise ParseError(f"bad matrix literal {text!r}") from exc
    if len(raw) != 4:
        raise ParseError(f"matrix literal {text!r} must look like 'a,b;c,d'")
    a, b, c, d = raw
    g = math.gcd(a, b, c, d)
    lines = [f"input [[{a}, {b}], [{c}, {d}]], p = {p}", f"gcd of entries = {g}"]
    if g > 1:
        lines.append(f"divide by {g}: scalar matrices act trivially")
    else:
        lines.append("entries share no factor: already primitive")
    m = normalize(raw, p)
    lines.append(f"sign normalized (first nonzero entry positive): {format_matrix(m)}")
    lines.append(f"determinant {m.det} = {p}^{m.n}, valuation {m.n}")
    s = to_coset(m)
    lines.append(
        f"Hermite form of the left coset: (i, j, b) = ({s.i}, {s.j}, {s.b}), "
        f"lift [[{p**s.i}, {s.b}], [0, {p**s.j}]]"
    )
    lines.append(f"[Gamma : Gamma_g] = {Stabilizer(m).index}, "
                 f"[Gamma : Gamma_g^-1] = {Stabilizer(inverse(m)).index}")
    lines.append(f"double coset Gamma g Gamma has {len(hecke_cosets(m))} left cosets")
    return lines


def _explain_cell(g1: str, g2: str, j: int, p: int) -> list[str]:
    m1, m2 = parse_matrix(g1, p), parse_matrix(g2, p)
    dec = compose_decomposition(m1, m2)
    if not 0 <= j < len(dec):
        raise ParseError(f"cell index {j} out of range 0..{len(dec) - 1}")
    r = dec.reps[j]
    return [
        f"composite of Gamma[{format_matrix(m1)}] after Gamma[{format_matrix(m2)}]",
        f"H = Gamma_g1^-1 = {dec.subgroup.describe()}, index {len(dec)}, "
        f"transversal Gamma = union H r_j",
        f"r_{j} = {format_matrix(r)}",
        f"cell {j} = {dec.cells[j].describe()}",
        f"membership: with g2 s = gamma_2 s_2, s lies in cell {j} iff r_{j} gamma_2 is in H",
        f"on cell {j} the composite is the map of Gamma g1 r_{j} g2 = {label(dec.terms[j])}",
    ]


def _explain_cylinder(spec: str, p: int) -> list[str]:
    cyl = cylinder_from_json(spec, p)
    if not cyl.factors:
        return ["full F, measure 1"]
    lines = [f"{len(cyl)} factor(s); x lies in the cylinder iff all hold:"]
    for f in cyl.factors:
        lines.append(f"  {f.describe()}")
        lines.append(f"    write g x = gamma_1 x_1 with x_1 in F; test c^-1 gamma_1 in {f.H.describe()}")
        const = f.constant()
        if const is not None:
            lines.append(f"    g is in Gamma, so this factor is {'always' if const else 'never'} satisfied")
    simple = cyl.simplify()
    lines.append("simplified: empty set, measure 0" if simple is None else f"simplified: {simple.describe()}")
    return lines


def explain(kind: str, args: list[str], p: int) -> str:
    """Human-readable derivation trace for a coset, a cell or a cylinder."""
    if not is_odd_prime(p):
        raise InvalidConfig(f"p must be an odd prime, got {p!r}")
    if kind == "coset" and len(args) == 1:
        lines = _explain_coset(args[0], p)
    elif kind == "cell" and len(args) == 3:
        try:
            j = int(args[2])
        except ValueError as exc:
            raise ParseError(f"cell index must be an integer, got {args[2]!r}") from exc
        lines = _explain_cell(args[0], args[1], j, p)
    elif kind == "cylinder" and len(args) == 1:
        lines = _explain_cylinder(args[0], p)
    else:
        raise ParseError(
            "usage: explain coset 'a,b;c,d' | explain cell G1 G2 J | explain cylinder JSON"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# subcommands


def _emit(obj, as_json: bool, text: str | None = None) -> None:
    if as_json or text is None:
        print(json.dumps(obj, indent=2, default=str))
    else:
        print(text)


def _prime(args) -> int:
    if not is_odd_prime(args.p):
        raise InvalidConfig(f"p must be an odd prime, got {args.p!r}")
    return args.p


def _count(text: str) -> int:
    """Sample counts may be written as 1e5."""
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"not a positive integer: {text!r}")
    return int(v)


def cmd_cosets_sphere(args) -> int:
    p = _prime(args)
    sph = enumerate_sphere(args.n, p)
    triples = [[s.i, s.j, s.b] for s in sph]
    _emit(triples, args.json, "\n".join(f"({i}, {j}, {b})" for i, j, b in triples))
    return 0


def cmd_verify_composition(args) -> int:
    p = _prime(args)
    if args.radius < args.val + 1:
        raise InvalidConfig("radius must be at least val + 1")
    cosets = enumerate_ball(args.val, p)
    points = enumerate_ball(args.radius, p)
    counterexamples = []
    for g1 in cosets:
        for g2 in cosets:
            for bad in verify_composition(compose_decomposition(g1, g2), points):
                counterexamples.append({"g1": label(g1), "g2": label(g2)} | bad)
    report = {"check": "composition", "p": p, "val": args.val, "radius": args.radius,
              "pairs": len(cosets) ** 2, "points": len(points),
              "violations": len(counterexamples), "counterexamples": counterexamples[:20]}
    _emit(report, args.json, f"composition: {len(counterexamples)} violations "
          f"over {len(cosets) ** 2} pairs and {len(points)} points")
    return 0 if not counterexamples else 1


def cmd_verify_atlas(args) -> int:
    p = _prime(args)
    rows = []
    for v in range(1, args.val + 1):
        for g in enumerate_sphere(v, p):
            rep = verify_atlas(g, args.radius)
            rows.append({"g": label(g), "charts": rep.charts, "points": rep.points, "ok": rep.ok,
                         "range_overlaps": rep.range_overlaps})
    ok = all(r["ok"] for r in rows)
    report = {"check": "atlas", "p": p, "radius": args.radius, "ok": ok, "cosets": rows}
    _emit(report, args.json, f"atlas: {sum(r['ok'] for r in rows)}/{len(rows)} cosets ok")
    return 0 if ok else 1


def cmd_verify_census(args) -> int:
    p = _prime(args)
    rows = []
    for g in enumerate_ball(args.val, p):
        rep = multiplicity_census(g, args.radius)
        rows.append({"g": label(g), "expected_images": rep.expected_images,
                     "expected_preimages": rep.expected_preimages, "ok": rep.ok,
                     "image_counts": sorted(set(rep.image_counts.values())),
                     "preimage_counts": sorted(set(rep.preimage_counts.values()))})
    ok = all(r["ok"] for r in rows)
    report = {"check": "census", "p": p, "radius": args.radius, "ok": ok, "cosets": rows}
    _emit(report, args.json, f"census: {sum(r['ok'] for r in rows)}/{len(rows)} cosets ok")
    return 0 if ok else 1


def cmd_tree_verify(args) -> int:
    p = _prime(args)
    ball = build_ball(args.radius, p)
    psi = psi_labeling(ball)
    glued = glue_generators(ball)
    verdict = no_relation_check(glued, args.radius)
    report = {
        "p": p, "radius": args.radius, "vertices": len(ball.vertices),
        "tree": ball.is_tree(), "regular": ball.interior_regular(),
        "psi_length_preserving": all(len(psi.inverse(v)) == v.n for v in ball.vertices),
        "generators": len(glued.maps), "inverse_closed": glued.closed_under_inverse(),
        "provenance_errors": len(verify_provenance(glued)),
        "words_checked": verdict.words_checked, "relations": len(verdict.failures),
    }
    ok = (report["tree"] and report["regular"] and report["psi_length_preserving"]
          and report["inverse_closed"] and not report["provenance_errors"] and verdict.ok)
    report["ok"] = ok
    _emit(report, args.json, "\n".join(f"{k}: {v}" for k, v in report.items()))
    return 0 if ok else 1


def cmd_tree_hecke(args) -> int:
    p = _prime(args)
    radius = args.radius or args.n + 3
    ball = build_ball(radius, p)
    psi_labeling(ball)
    rep = radial_vs_hecke(args.n, ball)
    out = {"p": p, "n": args.n, "radius": radius, "rows": rep.rows_compared,
           "hecke_mismatches": rep.hecke_mismatches,
           "recursion_mismatches": rep.recursion_mismatches,
           "structure_constants": rep.structure_constants, "ok": rep.ok}
    if args.csv:
        safe = [v for v in ball.vertices if v.n <= radius - args.n]
        try:
            out["csv_entries"] = export_coo_csv(hecke_operator(ball, args.n, safe), ball, args.csv)
        except OSError as exc:
            raise IoFailure(f"cannot write {args.csv}: {exc}") from exc
        out["csv"] = args.csv
    _emit(out, args.json, "\n".join(f"{k}: {v}" for k, v in out.items()))
    return 0 if rep.ok else 1


def _read_spec(text: str) -> str:
    if text.startswith("@"):
        try:
            return Path(text[1:]).read_text()
        except OSError as exc:
            raise IoFailure(f"cannot read {text[1:]}: {exc}") from exc
    return text


def cmd_profinite_measure(args) -> int:
    p = _prime(args)
    cyl = cylinder_from_json(_read_spec(args.cylinder), p)
    est, se = nu_F(cyl, EstimatorSettings(args.samples, args.seed, args.workers))
    out = {"cylinder": cylinder_to_json(cyl), "estimate": est, "stderr": se,
           "samples": args.samples, "seed": args.seed, "workers": args.workers}
    _emit(out, args.json, f"nu_F = {est:.6f} +- {se:.6f} (samples {args.samples}, seed {args.seed})")
    return 0


def cmd_haar_alpha(args) -> int:
    p = _prime(args)
    rep = alpha_kernel(parse_matrix(args.sigma1, p), parse_matrix(args.sigma2, p),
                       truncation=args.truncation,
                       settings=EstimatorSettings(args.samples, args.seed, args.workers))
    _emit(rep.to_json(), args.json,
          f"alpha = {rep.estimate:.6f} +- {rep.stderr:.6f} "
          f"(samples {rep.samples}, seed {rep.seed}, tail {rep.tail_indicator:.2e})")
    return 0


def cmd_suite(args) -> int:
    overrides = {k: getattr(args, k) for k in
                 ("p", "radius", "val_cap", "samples", "truncation", "seed", "workers",
                  "output", "format")}
    if args.only:
        try:
            overrides["criteria"] = [int(v) for v in args.only.split(",")]
        except ValueError as exc:
            raise InvalidConfig(f"bad criterion list {args.only!r}") from exc
    if args.config:
        cfg = RunConfig.from_file(args.config, **overrides)
    else:
        cfg = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    status, report = run_suite(cfg)
    print(f"report written to {cfg.output} ({'all passed' if report['passed'] else 'FAILURES'})")
    return status


def cmd_explain(args) -> int:
    print(explain(args.kind, args.args, args.p))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hecke-groupoid",
                                 description="Coset groupoids, the p-adic tree and Hecke kernels.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(parser, json_flag=True):
        parser.add_argument("--p", type=int, default=3)
        if json_flag:
            parser.add_argument("--json", action="store_true", help="print JSON")

    cs = sub.add_parser("cosets", help="coset enumeration").add_subparsers(dest="what", required=True)
    sp = cs.add_parser("sphere", help="cosets of valuation n")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(func=cmd_cosets_sphere)

    vs = sub.add_parser("verify", help="exhaustive groupoid checks").add_subparsers(dest="what", required=True)
    vc = vs.add_parser("composition")
    common(vc)
    vc.add_argument("--val", type=int, default=2)
    vc.add_argument("--radius", type=int, default=4)
    vc.set_defaults(func=cmd_verify_composition)
    va = vs.add_parser("atlas")
    common(va)
    va.add_argument("--val", type=int, default=2)
    va.add_argument("--radius", type=int, default=4)
    va.set_defaults(func=cmd_verify_atlas)
    ve = vs.add_parser("census")
    common(ve)
    ve.add_argument("--val", type=int, default=2)
    ve.add_argument("--radius", type=int, default=5)
    ve.set_defaults(func=cmd_verify_census)

    ts = sub.add_parser("tree", help="the coset tree").add_subparsers(dest="what", required=True)
    tv = ts.add_parser("verify")
    common(tv)
    tv.add_argument("--radius", type=int, default=6)
    tv.set_defaults(func=cmd_tree_verify)
    th = ts.add_parser("hecke")
    common(th)
    th.add_argument("--n", type=int, required=True)
    th.add_argument("--radius", type=int, default=None, help="default n + 3")
    th.add_argument("--csv", default=None, help="export T_{sigma_p^n} as coordinate-list CSV")
    th.set_defaults(func=cmd_tree_hecke)

    ps = sub.add_parser("profinite", help="cylinder sets").add_subparsers(dest="what", required=True)
    pm = ps.add_parser("measure")
    common(pm)
    pm.add_argument("--cylinder", required=True, help="JSON spec, or @file")
    pm.add_argument("--samples", type=_count, default=100_000)
    pm.add_argument("--seed", type=int, default=42)
    pm.add_argument("--workers", type=int, default=4)
    pm.set_defaults(func=cmd_profinite_measure)

    hs = sub.add_parser("haar", help="the continuous model").add_subparsers(dest="what", required=True)
    ha = hs.add_parser("alpha")
    common(ha)
    ha.add_argument("--sigma1", required=True)
    ha.add_argument("--sigma2", required=True)
    ha.add_argument("--samples", type=_count, default=100_000)
    ha.add_argument("--truncation", type=float, default=40.0)
    ha.add_argument("--seed", type=int, default=42)
    ha.add_argument("--workers", type=int, default=4)
    ha.set_defaults(func=cmd_haar_alpha)

    su = sub.add_parser("suite", help="run the acceptance suite and write a report")
    su.add_argument("--config", default=None, help="JSON file with RunConfig fields")
    su.add_argument("--p", type=int, default=None)
    su.add_argument("--radius", type=int, default=None)
    su.add_argument("--val-cap", dest="val_cap", type=int, default=None)
    su.add_argument("--samples", type=_count, default=None)
    su.add_argument("--truncation", type=float, default=None)
    su.add_argument("--seed", type=int, default=None)
    su.add_argument("--workers", type=int, default=None)
    su.add_argument("--output", default=None)
    su.add_argument("--format", choices=("json", "csv"), default=None)
    su.add_argument("--only", default=None, help="comma separated criterion numbers")
    su.set_defaults(func=cmd_suite)

    ex = sub.add_parser("explain", help="derivation trace for a coset, cell or cylinder")
    ex.add_argument("--p", type=int, default=3)
    ex.add_argument("kind", choices=("coset", "cell", "cylinder"))
    ex.add_argument("args", nargs="+")
    ex.set_defaults(func=cmd_explain)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HeckeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
