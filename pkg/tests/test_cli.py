import csv
import hashlib
import io
import json
import os

import pytest
from click.testing import CliRunner

from dimerlab.cli import emit_plotdata, main, parse_gen
from dimerlab.dbar import solve_F
from dimerlab.doubledimer import default_poles, expected_height
from dimerlab.exact import ExactScalar
from dimerlab.lattice import build_rectangle, classify_square, grid_to_square, square_to_grid


def _run(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_count_2x3():
    r = _run("count", "--gen", "rect:2x3")
    assert r.exit_code == 0
    assert r.output.strip() == "3"


def test_count_from_domain_file(tmp_path):
    p = tmp_path / "d.json"
    p.write_text(build_rectangle(2, 4).to_json())
    r = _run("count", "--domain", str(p))
    assert r.exit_code == 0 and r.output.strip() == "5"


def test_verify_theorem1_5x5():
    r = _run("verify-theorem1", "--gen", "odd:5x5")
    assert r.exit_code == 0
    line = r.output.strip()
    assert line.startswith("0 violations / ") and line.endswith(" interior vertices")


def test_failure_json_and_exit_code(tmp_path):
    r = _run("verify-theorem1", "--gen", "rect:4x4", "--out", str(tmp_path))
    assert r.exit_code != 0
    rec = json.loads(r.output.strip().splitlines()[-1])
    assert rec["status"] == "fail" and rec["invariant"]
    assert (tmp_path / "failure.json").exists()


def test_manifest_hashes(tmp_path):
    r = _run("primitive", "--gen", "rect:4x4", "--out", str(tmp_path))
    assert r.exit_code == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["files"]
    for name, digest in man["files"].items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest
    assert {"config", "versions", "timings"} <= set(man)
    assert man["config"]["backend"] == "exact"


def test_artifacts_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert _run("sample", "--gen", "rect:4x4", "--samples", "50", "--seed", "9", "--out", str(out)).exit_code == 0
    ma = json.loads((a / "manifest.json").read_text())["files"]
    mb = json.loads((b / "manifest.json").read_text())["files"]
    assert ma == mb


def test_converge_decreasing(tmp_path):
    r = _run("converge", "--meshes", "10,20,40", "--out", str(tmp_path))
    assert r.exit_code == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "convergence.csv").read_text())))
    errs = [float(x["sup_error_Eh"]) for x in rows]
    assert len(errs) == 3 and errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("cmd", ["coupling", "solve-fg", "expected-height", "corners", "verify-all"])
def test_commands_succeed(cmd, tmp_path):
    r = _run(cmd, "--gen", "rect:2x4", "--out", str(tmp_path))
    assert r.exit_code == 0, r.output
    assert (tmp_path / "manifest.json").exists()


def test_verify_all_odd():
    r = _run("verify-all", "--gen", "odd:7x7")
    assert r.exit_code == 0 and "0 violations" in r.output


def test_parse_gen_variants():
    assert parse_gen("rect:2x3") == build_rectangle(2, 3)
    assert parse_gen('{"kind": "rectangle", "width": 2, "height": 3}') == build_rectangle(2, 3)
    assert parse_gen("poly:0,0;2,0;2,3;0,3") == build_rectangle(2, 3)
    assert parse_gen("temperley:5x5").is_balanced


# -- plot data ----------------------------------------------------------------------

def test_plotdata_exact_round_trip():
    d = build_rectangle(4, 4)
    u0, v0 = default_poles(d)
    F = solve_F(d, v0)
    rows = list(csv.DictReader(io.StringIO(emit_plotdata(F))))
    assert rows
    for r in rows:
        s = (int(r["n"]), int(r["m"]))
        assert ExactScalar.parse(r["value"]) == F[s]


def test_plotdata_heatmap_range():
    d = build_rectangle(6, 6)
    u0, v0 = default_poles(d)
    E = expected_height(d, u0, v0, backend="float")
    rows = list(csv.DictReader(io.StringIO(emit_plotdata(E))))
    assert set(rows[0]) == {"p", "q", "value"}
    vals = [float(r["value"]) for r in rows]
    assert min(vals) >= -1e-12 and max(vals) <= 1 + 1e-12
    js = json.loads(emit_plotdata(E, "json"))
    assert len(js) == len(rows)


def test_plotdata_decay_along_section():
    d = build_rectangle(40, 8)
    v0 = next(s for s in d.interior_boundary if classify_square(s) == "W0"
              and square_to_grid(s)[1] == 0 and square_to_grid(s)[0] >= 4)
    F = solve_F(d, v0, backend="float")
    rows = {(int(r["n"]), int(r["m"])): complex(r["value"]) for r in csv.DictReader(io.StringIO(emit_plotdata(F)))}
    x0 = square_to_grid(v0)[0]
    section = [abs(rows[grid_to_square(x, 2)]) for x in range(x0 + 4, 40)
               if classify_square(grid_to_square(x, 2)) == "B0"]
    assert len(section) > 5
    assert all(a > b for a, b in zip(section, section[1:]))
