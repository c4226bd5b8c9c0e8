"""Command-line entry point: ``dimerlab <command> [options]``.

Every command accepts a domain (``--domain file.json`` or ``--gen spec``),
prints a short summary, and with ``--out DIR`` writes its artifacts plus a
``manifest.json`` listing each file with its SHA-256.  Exit status is 0 iff
every assertion the command makes holds; otherwise a JSON failure record is
printed naming the invariant and the location.

Generator specs: ``rect:WxH``, ``odd:WxH``, ``temperley:WxH``,
``poly:x0,y0;x1,y1;...`` (rectilinear grid-frame polygon) or a JSON object
accepted by ``build_from_spec``.
"""
from __future__ import annotations

import csv
import hashlib
from importlib import metadata
import io
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import click
import numpy as np

from . import __version__
from .dbar import BlackField, WhiteField, check_holomorphic, solve_F, solve_G
from .exact import ExactScalar
from .lattice import (Domain, DomainError, boundary_arcs, build_from_polygon, classify_square, build_from_spec,
                      build_odd_temperley, build_rectangle, build_temperley,
                      classify_piecewise_temperley, find_corners)

DEFAULT_CAP = 14


class Failure(Exception):
    def __init__(self, invariant: str, location=None, detail: str = ""):
        super().__init__(f"{invariant}: {detail}")
        self.record = {"status": "fail", "invariant": invariant,
                       "location": _jsonable(location), "detail": detail}


def _jsonable(x):
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, ExactScalar):
        return str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


# -- configuration and artifacts ------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    domain_source: Optional[str]
    backend: str
    seed: int
    out: Optional[str]
    meshes: list = field(default_factory=list)
    cap: int = DEFAULT_CAP
    samples: int = 0
    extra: dict = field(default_factory=dict)


class Artifacts:
    """Collects output files and writes the manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.files: dict = {}
        self.t0 = time.perf_counter()
        self.timings: dict = {}

    def write(self, name: str, text: str):
        if self.cfg.out is None:
            return
        os.makedirs(self.cfg.out, exist_ok=True)
        data = text.encode()
        with open(os.path.join(self.cfg.out, name), "wb") as fh:
            fh.write(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def finish(self, status: str):
        if self.cfg.out is None:
            return
        self.timings["total_s"] = round(time.perf_counter() - self.t0, 6)
        versions = {"dimerlab": __version__, "python": platform.python_version()}
        for dist in ("numpy", "scipy", "gmpy2", "click"):
            try:
                versions[dist] = metadata.version(dist)
            except metadata.PackageNotFoundError:
                versions[dist] = "unknown"
        cfg = {k: v for k, v in self.cfg.__dict__.items()}
        manifest = {"config": cfg, "versions": versions, "timings": self.timings, "status": status,
                    "files": dict(sorted(self.files.items()))}
        os.makedirs(self.cfg.out, exist_ok=True)
        with open(os.path.join(self.cfg.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)


def parse_gen(spec: str, mesh=1) -> Domain:
    spec = spec.strip()
    if spec.startswith("{"):
        return build_from_spec(json.loads(spec))
    kind, _, arg = spec.partition(":")
    if kind in ("rect", "odd", "temperley"):
        w, h = (int(t) for t in arg.lower().split("x"))
        if kind == "rect":
            return build_rectangle(w, h, mesh=mesh)
        if kind == "odd":
            return build_odd_temperley((w, h), mesh)
        return build_temperley((w, h), mesh=mesh)
    if kind == "poly":
        pts = [tuple(int(c) for c in p.split(",")) for p in arg.split(";")]
        return build_from_polygon(pts, mesh)
    raise click.BadParameter(f"unknown generator spec {spec!r}")


def load_domain(domain: Optional[str], gen: Optional[str]) -> Domain:
    if domain and gen:
        raise click.UsageError("give either --domain or --gen, not both")
    if domain:
        with open(domain) as fh:
            return Domain.from_json(fh.read())
    if gen:
        return parse_gen(gen)
    raise click.UsageError("a domain is required (--domain or --gen)")


def _fmt(v) -> str:
    if isinstance(v, ExactScalar):
        return str(v)
    if isinstance(v, complex):
        return repr(v)
    return repr(float(v)) if not isinstance(v, (int, Fraction)) else str(v)


def emit_plotdata(fld, fmt: str = "csv") -> str:
    """Render a VertexField or a square field as CSV or JSON text.

    Vertex fields give ``p,q,value[,stderr]``; square fields give ``n,m,value``.
    Exact values are written with their lossless string form.
    """
    from .primitive import VertexField
    if isinstance(fld, VertexField):
        keys = ("p", "q")
        rows = [(z, v, None if fld.stderr is None else fld.stderr.get(z)) for z, v in sorted(fld.values.items())]
    elif isinstance(fld, (BlackField, WhiteField)):
        keys = ("n", "m")
        rows = [(s, v, None) for s, v in fld.items()]
    else:
        raise TypeError(f"cannot emit {type(fld).__name__}")
    has_err = any(e is not None for _, _, e in rows)
    if fmt == "json":
        return json.dumps([{keys[0]: s[0], keys[1]: s[1], "value": _fmt(v),
                            **({"stderr": e} if has_err else {})} for s, v, e in rows], indent=1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(keys) + ["value"] + (["stderr"] if has_err else []))
    for s, v, e in rows:
        w.writerow([s[0], s[1], _fmt(v)] + ([repr(e)] if has_err else []))
    return buf.getvalue()


def _parse_square(text: Optional[str]):
    if text is None:
        return None
    a, b = text.split(",")
    return (int(a), int(b))


# -- command bodies ---------------------------------------------------------------------

def run_count(d, cfg, art):
    from .kasteleyn import assemble, count_tilings
    n = count_tilings(assemble(d, cfg.backend))
    art.write("count.json", json.dumps({"count": n}) + "\n")
    return str(n)


def run_coupling(d, cfg, art):
    from .kasteleyn import assemble, inverse_matrix
    C = inverse_matrix(assemble(d, cfg.backend))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u_n", "u_m", "v_n", "v_m", "value"])
    for (u, v), val in sorted(C.items()):
        zero = val.is_zero() if cfg.backend == "exact" else abs(val) < 1e-15
        if not zero:
            w.writerow([u[0], u[1], v[0], v[1], _fmt(val)])
    art.write("coupling.csv", buf.getvalue())
    return f"{len(C)} entries"


def _poles(d, cfg):
    from .doubledimer import default_poles
    u0 = _parse_square(cfg.extra.get("u0"))
    v0 = _parse_square(cfg.extra.get("v0"))
    if u0 is None or v0 is None:
        du, dv = default_poles(d)
        u0, v0 = u0 or du, v0 or dv
    return u0, v0


def run_solve_fg(d, cfg, art):
    u0, v0 = _poles(d, cfg)
    F = solve_F(d, v0, backend=cfg.backend)
    G = solve_G(d, u0, backend=cfg.backend)
    tol = 0.0 if cfg.backend == "exact" else 1e-9
    for name, f, pole in (("F", F, v0), ("G", G, u0)):
        rep = check_holomorphic(f, exclude=(pole,), tol=tol)
        if rep.nonzero:
            raise Failure(f"{name} holomorphic", rep.nonzero[0])
        bad = f.reality_violations()
        if bad:
            raise Failure(f"{name} sublattice reality", bad[0])
    art.write("F.csv", emit_plotdata(F))
    art.write("G.csv", emit_plotdata(G))
    return f"F, G solved with u0={u0} v0={v0}"


def run_primitive(d, cfg, art):
    from .primitive import (boundary_values, formula_vertices, integrate_H, leapfrog_formula_check,
                            max_principle_holds, nonlinear_identity, saddle_check,
                            sholomorphic_correspondence)
    u0, v0 = _poles(d, cfg)
    F = solve_F(d, v0, backend=cfg.backend)
    G = solve_G(d, u0, backend=cfg.backend)
    H = integrate_H(F, G, skip=(u0, v0))
    report = {"u0": u0, "v0": v0}
    bad = [z for z in formula_vertices(H, F, G, (u0, v0)) if not leapfrog_formula_check(H, F, G, z)[2]]
    report["leapfrog_formula_failures"] = bad
    report["saddles"] = saddle_check(H)
    if cfg.backend == "exact":
        report["nonlinear_failures"] = [z for z in d.interior_vertices if not nonlinear_identity(H, z).is_zero()]
    bv = boundary_values(H, boundary_arcs(d, u0, v0), F, G)
    report["boundary_constant"] = bv.constant_on_arcs
    report["boundary_closed_forms_agree"] = bv.agree
    report["value_u0v0"] = _fmt(bv.value_u0v0)
    report["max_principle"] = max_principle_holds(H)
    if cfg.backend == "exact":
        report["sholomorphic_match"] = sholomorphic_correspondence(F, G, H, (u0, v0)).match
    art.write("H.csv", emit_plotdata(bv.gauged))
    art.write("primitive_report.json", json.dumps(_jsonable_dict(report), indent=1, sort_keys=True))
    for key in ("leapfrog_formula_failures", "saddles", "nonlinear_failures"):
        if report.get(key):
            raise Failure(key, report[key][0])
    for key in ("boundary_constant", "boundary_closed_forms_agree", "max_principle", "sholomorphic_match"):
        if key in report and not report[key]:
            raise Failure(key)
    return f"H checks passed on {len(d.interior_vertices)} interior vertices"


def _jsonable_dict(d):
    return {k: _jsonable(v) for k, v in d.items()}


def run_expected_height(d, cfg, art):
    from .doubledimer import enumerate_double_dimer_expectation, expected_height
    u0, v0 = _poles(d, cfg)
    E = expected_height(d, u0, v0, backend=cfg.backend)
    art.write("expected_height.csv", emit_plotdata(E))
    msg = f"E[h] on {len(E.values)} vertices"
    if cfg.backend == "exact" and len(d.squares) <= cfg.cap:
        O = enumerate_double_dimer_expectation(d, u0, v0, cap=cfg.cap)
        bad = [z for z in O.values if not (E[z] - O[z]).is_zero()]
        if bad:
            raise Failure("pipeline equals enumeration", bad[0])
        msg += "; matches enumeration"
    return msg


def run_verify_theorem1(d, cfg, art):
    from .doubledimer import verify_theorem1
    u1 = _parse_square(cfg.extra.get("u0"))
    u2 = _parse_square(cfg.extra.get("v0"))
    rep = verify_theorem1(d, u1, u2, backend=cfg.backend)
    art.write("theorem1.json", json.dumps({"u1": rep.u1, "u2": rep.u2, "checked": rep.checked,
                                           "violations": rep.violations, "max_abs": rep.max_abs}, indent=1))
    art.write("expected_height.csv", emit_plotdata(rep.field))
    if rep.violations:
        raise Failure("leap-frog harmonicity", rep.violations[0], rep.summary())
    return rep.summary()


def run_sample(d, cfg, art):
    from .doubledimer import TilingSampler, height_of_tiling
    n = cfg.samples or 1
    s = TilingSampler(d, cfg.backend)
    rng = np.random.default_rng(cfg.seed)
    freq: dict = {}
    first = []
    for k in range(n):
        t = s.sample(rng)
        for e in t.edges:
            freq[e] = freq.get(e, 0) + 1
        if k < 10:
            first.append(t.to_json())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u_n", "u_m", "v_n", "v_m", "frequency"])
    for (u, v), c in sorted(freq.items()):
        w.writerow([u[0], u[1], v[0], v[1], repr(c / n)])
    art.write("edge_frequencies.csv", buf.getvalue())
    art.write("tilings.json", json.dumps(first))
    return f"{n} samples"


SHAPES = {
    "square": [(0, 0), (1, 0), (1, 1), (0, 1)],
    "L": [(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)],
}
# default continuum marked points (u0, v0) per shape
SHAPE_POLES = {"square": ((0.3, 0.0), (1.0, 0.6)), "L": ((0.25, 0.0), (1.0, 0.25))}


def _point(text):
    return tuple(float(t) for t in text.split(","))


def run_converge(d, cfg, art):
    from .continuum import convergence_report
    shape = cfg.extra.get("shape") or "square"
    poly = SHAPES[shape]
    u0 = _point(cfg.extra["u0"]) if cfg.extra.get("u0") else SHAPE_POLES[shape][0]
    v0 = _point(cfg.extra["v0"]) if cfg.extra.get("v0") else SHAPE_POLES[shape][1]
    meshes = cfg.meshes or [20, 40, 80]
    rows = convergence_report(poly, u0, v0, sizes=meshes)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mesh", "sup_error_Eh", "sup_cauchy_F", "note"])
    for r in rows:
        w.writerow([repr(r.mesh), repr(r.sup_error_Eh), repr(r.sup_cauchy_F), r.note])
    art.write("convergence.csv", buf.getvalue())
    click.echo(buf.getvalue().rstrip())
    skipped = [r for r in rows if r.note]
    if skipped:
        raise DomainError(f"mesh 1/{skipped[0].squares_per_side}: {skipped[0].note}")
    errs = [r.sup_error_Eh for r in rows]
    if any(b >= a for a, b in zip(errs, errs[1:])):
        raise Failure("error column strictly decreasing", None, repr(errs))
    return f"{len(rows)} meshes, errors decreasing"


def run_corners(d, cfg, art):
    rep = find_corners(d)
    pw = classify_piecewise_temperley(d)
    out = {
        "corners": [{"vertex": c.vertex, "color": c.color, "convexity": c.convexity, "square": c.square,
                     "type": classify_square(c.square)} for c in rep.corners],
        "identities_hold": rep.lemma_holds(),
        "black_piecewise_n": pw.black_n,
        "white_piecewise_m": pw.white_m,
        "segment_types": pw.segment_types,
    }
    art.write("corners.json", json.dumps(out, indent=1, default=_jsonable))
    if d.is_balanced and not rep.lemma_holds():
        raise Failure("corner identities", None, repr(rep.counts))
    return f"{len(rep.corners)} corners, black_n={pw.black_n}, white_m={pw.white_m}"


def run_verify_all(d, cfg, art):
    """Every invariant that applies to the domain; exact backend."""
    from .kasteleyn import assemble, count_tilings, edge_probability, inverse_matrix
    from .doubledimer import enumerate_tilings, verify_theorem1
    lines = []
    if d.is_balanced:
        sys_ = assemble(d, cfg.backend)
        n = count_tilings(sys_)
        lines.append(f"count {n}")
        if len(d.squares) <= cfg.cap:
            tl = enumerate_tilings(d, cfg.cap)
            if len(tl) != n:
                raise Failure("determinant equals count", None, f"{n} vs {len(tl)}")
            if n:
                C = inverse_matrix(sys_)
                for u, v in {e for t in tl for e in t.edges}:
                    f = Fraction(sum(1 for t in tl if (u, v) in t.edges), len(tl))
                    if Fraction(edge_probability(sys_, u, v, C)) != f:
                        raise Failure("coupling equals edge frequency", (u, v))
                lines.append("enumeration oracle agrees")
        if n:
            try:
                _poles(d, cfg)
            except DomainError:
                lines.append("no admissible (u0, v0): even-case checks skipped")
            else:
                lines.append(run_solve_fg(d, cfg, art))
                lines.append(run_primitive(d, cfg, art))
                lines.append(run_expected_height(d, cfg, art))
    elif d.is_odd:
        rep = verify_theorem1(d, backend=cfg.backend)
        if rep.violations:
            raise Failure("leap-frog harmonicity", rep.violations[0], rep.summary())
        lines.append("leap-frog harmonicity: " + rep.summary())
    lines.append(run_corners(d, cfg, art))
    return "\n".join(lines)


COMMANDS = {
    "count": run_count, "coupling": run_coupling, "solve-fg": run_solve_fg, "primitive": run_primitive,
    "expected-height": run_expected_height, "verify-theorem1": run_verify_theorem1, "sample": run_sample,
    "converge": run_converge, "corners": run_corners, "verify-all": run_verify_all,
}
NO_DOMAIN = {"converge"}
HELP = {
    "count": "Number of domino tilings from the Kasteleyn determinant.",
    "coupling": "Edge probabilities from the inverse Kasteleyn matrix.",
    "solve-fg": "Solve the boundary problems for F (pole v0) and G (pole u0).",
    "primitive": "Integrate H from F and G and check its local identities.",
    "expected-height": "Expected double-dimer height through the F, G, H pipeline.",
    "verify-theorem1": "Leap-frog harmonicity of E[h] on an odd Temperley domain.",
    "sample": "Draw exact uniform tilings and tally edge frequencies.",
    "converge": "Convergence table of E[h] against the continuum harmonic measure.",
    "corners": "Corner counts and piecewise-Temperley classification.",
}


def run(command: str, cfg: RunConfig, d: Optional[Domain]) -> int:
    art = Artifacts(cfg)
    try:
        t = time.perf_counter()
        msg = COMMANDS[command](d, cfg, art)
        art.timings[command] = round(time.perf_counter() - t, 6)
    except Failure as f:
        click.echo(json.dumps(f.record))
        art.write("failure.json", json.dumps(f.record) + "\n")
        art.finish("fail")
        return 1
    except (DomainError, ArithmeticError) as e:
        rec = {"status": "fail", "invariant": "precondition", "location": None, "detail": str(e)}
        click.echo(json.dumps(rec))
        art.write("failure.json", json.dumps(rec) + "\n")
        art.finish("fail")
        return 1
    if msg:
        click.echo(msg)
    art.finish("ok")
    return 0


def _common(f):
    opts = [
        click.option("--domain", type=click.Path(exists=True, dir_okay=False), help="Domain JSON file."),
        click.option("--gen", help="Generator spec, e.g. rect:4x4 or odd:5x5."),
        click.option("--backend", type=click.Choice(["exact", "float"]), default=None),
        click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=0),
        click.option("--out", type=click.Path(file_okay=False), default=None),
        click.option("--meshes", default=None, help="Comma-separated squares per side, e.g. 20,40,80."),
        click.option("--cap", type=int, default=DEFAULT_CAP, help="Enumeration cap (squares)."),
        click.option("--samples", type=int, default=0),
        click.option("--u0", default=None, help="Marked black square n,m (a point x,y for converge)."),
        click.option("--v0", default=None, help="Marked white square n,m (u2 for verify-theorem1)."),
        click.option("--shape", type=click.Choice(sorted(SHAPES)), default=None),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


@click.group()
@click.version_option(__version__, prog_name="dimerlab")
def main():
    """Dimer and double-dimer discrete complex analysis toolkit."""


def _make(name):
    doc = HELP.get(name) or (COMMANDS[name].__doc__ or name).strip().splitlines()[0]
    @main.command(name=name, help=doc)
    @_common
    def cmd(domain, gen, backend, seed, out, meshes, cap, samples, u0, v0, shape):
        d = None if name in NO_DOMAIN else load_domain(domain, gen)
        if backend is None:
            large = d is not None and len(d.squares) > 200
            backend = "float" if name == "converge" or (name == "sample" and large) else "exact"
        cfg = RunConfig(name, domain or gen, backend, seed, out,
                        [int(m) for m in meshes.split(",")] if meshes else [], cap, samples,
                        {"u0": u0, "v0": v0, "shape": shape})
        sys.exit(run(name, cfg, d))
    return cmd


for _name in COMMANDS:
    _make(_name)


if __name__ == "__main__":
    main()
