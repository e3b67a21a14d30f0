import csv

import numpy as np
import pytest

from fixedrank.cli import main
from fixedrank.errors import FormatError
from fixedrank.instances import gapped_matrix, random_point
from fixedrank.io import read_descriptor, read_matrix, read_point, write_descriptor, write_matrix, write_point
from fixedrank.manifold import project_normal
from fixedrank.projection import truncate
from fixedrank.rng import make_rng


def header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))[1:]


# I/O ---------------------------------------------------------------------------


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_matrix_round_trip_is_exact(tmp_path, fmt):
    A = make_rng(0).standard_normal((5, 3)) * 10.0 ** make_rng(1).uniform(-300, 300, (5, 3))
    write_matrix(tmp_path / "a", A, fmt)
    B = read_matrix(tmp_path / "a")
    assert B.shape == (5, 3) and np.array_equal(A, B)


def test_binary_layout(tmp_path):
    write_matrix(tmp_path / "a.bin", np.arange(6.0).reshape(2, 3), "binary")
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:4] == b"LRGM" and int.from_bytes(raw[4:12], "little") == 2 and len(raw) == 20 + 48
    assert np.frombuffer(raw[20:], "<f8")[4] == 4.0


def test_point_round_trip(tmp_path):
    p = random_point(make_rng(2), 6, 4, 2)
    write_point(tmp_path / "p.txt", p)
    q = read_point(tmp_path / "p.txt")
    assert np.array_equal(p.U, q.U) and np.array_equal(p.Z, q.Z)


@pytest.mark.parametrize("text, line", [
    ("2 2\n1 2\n3\n", 3),
    ("2 2\n1 x\n3 4\n", 2),
    ("2 two\n1 2\n3 4\n", 1),
    ("2 2\n1 2\n3 4\n5 6\n", 4),
])
def test_matrix_parse_errors_name_the_line(tmp_path, text, line):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(FormatError) as info:
        read_matrix(path)
    assert info.value.line == line and f"bad.txt:{line}:" in str(info.value)


def test_truncated_binary_rejected(tmp_path):
    write_matrix(tmp_path / "a.bin", np.ones((3, 3)), "binary")
    (tmp_path / "a.bin").write_bytes((tmp_path / "a.bin").read_bytes()[:-8])
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "a.bin")


def test_descriptor_parsing(tmp_path):
    write_descriptor(tmp_path / "d.txt", {"field": "scalar", "c": 0.5})
    assert read_descriptor(tmp_path / "d.txt") == {"field": "scalar", "c": "0.5"}
    (tmp_path / "c.txt").write_text("# comment\nfield = zero  # trailing\n\nr = 1\n")
    assert read_descriptor(tmp_path / "c.txt") == {"field": "zero", "r": "1"}
    (tmp_path / "dup.txt").write_text("r = 1\nr = 2\n")
    with pytest.raises(FormatError) as info:
        read_descriptor(tmp_path / "dup.txt")
    assert info.value.line == 2
    (tmp_path / "bad.txt").write_text("r = 1\njunk\n")
    with pytest.raises(FormatError) as info:
        read_descriptor(tmp_path / "bad.txt")
    assert info.value.line == 2


# CLI ---------------------------------------------------------------------------


def run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path), *map(str, argv)])


def test_truncate_example(tmp_path, capsys):
    write_matrix(tmp_path / "a.txt", np.diag([3.0, 1.0]))
    assert run(tmp_path, "truncate", tmp_path / "a.txt", "-r", 1) == 0
    assert capsys.readouterr().out.split() == ["3", "1", "0.66666666666666663"]
    p = read_point(tmp_path / "point.txt")
    np.testing.assert_allclose(p.dense(), np.diag([3.0, 0.0]), atol=1e-15)
    assert (tmp_path / "gap.txt").read_text().split()[0] == "3"


def test_truncate_failures(tmp_path, capsys):
    write_matrix(tmp_path / "a.txt", np.diag([3.0, 1.0]))
    assert run(tmp_path, "truncate", tmp_path / "a.txt", "-r", 3) == 2
    write_matrix(tmp_path / "i.txt", np.eye(2))
    assert run(tmp_path, "truncate", tmp_path / "i.txt", "-r", 1) == 2
    assert "kind=SkeletonProximityError" in capsys.readouterr().err
    (tmp_path / "bad.txt").write_text("2 2\n1 2\n")
    assert run(tmp_path, "truncate", tmp_path / "bad.txt", "-r", 1) == 1
    assert run(tmp_path, "truncate", tmp_path / "missing.txt", "-r", 1) == 1
    err = capsys.readouterr().err
    assert err.count("error code=1") == 2


def test_truncate_binary_input(tmp_path, capsys):
    write_matrix(tmp_path / "a.bin", np.diag([3.0, 1.0]), "binary")
    assert run(tmp_path, "truncate", tmp_path / "a.bin", "-r", 1) == 0


def test_dsvd_example(tmp_path):
    write_matrix(tmp_path / "a.txt", np.diag([3.0, 1.0]))
    write_matrix(tmp_path / "x.txt", np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert run(tmp_path, "dsvd", tmp_path / "a.txt", tmp_path / "x.txt", "-r", 1) == 0
    np.testing.assert_allclose(read_matrix(tmp_path / "dsvd.txt"), [[0.0, 1.125], [0.375, 0.0]], atol=1e-15)


def test_curvature_command(tmp_path, capsys):
    rng = make_rng(3)
    T = gapped_matrix(rng, 6, 5, 2)
    p, _ = truncate(T, 2)
    write_point(tmp_path / "p.txt", p)
    write_matrix(tmp_path / "n.txt", project_normal(p, T).N)
    assert run(tmp_path, "curvature", tmp_path / "p.txt", tmp_path / "n.txt") == 0
    assert header(tmp_path / "curvature.csv") == ["index", "kappa", "relation_residual"]
    kappa = sorted(float(r[1]) for r in rows(tmp_path / "curvature.csv"))
    s = np.linalg.svd(T, compute_uv=False)
    k = (s[2:][None, :] / s[:2][:, None]).ravel()
    np.testing.assert_allclose(kappa, np.sort(np.concatenate([k, -k])), atol=1e-12)
    assert "nonzero_count 12" in capsys.readouterr().out


def test_geodesic_command(tmp_path):
    p = random_point(make_rng(4), 5, 4, 2)
    write_point(tmp_path / "p.txt", p)
    write_matrix(tmp_path / "d.txt", 0.05 * make_rng(5).standard_normal((5, 4)))
    assert run(tmp_path, "geodesic", tmp_path / "p.txt", tmp_path / "d.txt", "--steps", 50) == 0
    assert header(tmp_path / "geodesic.csv") == ["t", "speed", "distance_from_start"]
    speeds = [float(r[1]) for r in rows(tmp_path / "geodesic.csv")]
    assert len(speeds) == 51 and max(speeds) - min(speeds) <= 1e-10 * speeds[0]
    read_point(tmp_path / "geodesic_end.txt")


def test_do_run_zero_field(tmp_path):
    (tmp_path / "d.txt").write_text("field = zero\nl = 6\nm = 5\nr = 2\nt1 = 0.1\ndt = 0.01\n")
    assert run(tmp_path, "do-run", tmp_path / "d.txt") == 0
    h = header(tmp_path / "trajectory.csv")
    assert h[0] == "t"
    data = rows(tmp_path / "trajectory.csv")
    assert len(data) == 11
    assert header(tmp_path / "error.csv") == ["t", "do_error", "best_error", "bound"]
    assert "status = ok" in (tmp_path / "summary.txt").read_text()
    assert all(float(r[1]) <= 1e-13 for r in rows(tmp_path / "error.csv"))


def test_do_run_scalar_closed_form(tmp_path):
    (tmp_path / "d.txt").write_text("field = scalar\nc = 0.5\nl = 6\nm = 5\nr = 2\ndt = 0.01\nseed = 7\n")
    assert run(tmp_path, "do-run", tmp_path / "d.txt") == 0
    summary = dict(line.split(" = ") for line in (tmp_path / "summary.txt").read_text().splitlines())
    assert float(summary["terminal_error_closed_form"]) <= 1e-9
    assert summary["bound_violations"] == "0" and summary["K_certified"] == "True"


def test_do_run_skeleton_crossing(tmp_path, capsys):
    write_matrix(tmp_path / "f0.txt", np.diag([2.0, 1.0]))
    write_matrix(tmp_path / "b.txt", np.diag([-1.0, 1.0]))
    (tmp_path / "d.txt").write_text("field = affine\nB = b.txt\ninitial = f0.txt\nr = 1\ndt = 0.01\n")
    assert run(tmp_path, "do-run", tmp_path / "d.txt") == 3
    summary = (tmp_path / "summary.txt").read_text()
    assert "status = skeleton_crossing" in summary
    t = float(summary.split("crossing_time = ")[1].split()[0])
    assert t == pytest.approx(0.5, abs=0.01)
    assert "error code=3" in capsys.readouterr().err


def test_do_run_bad_descriptor(tmp_path, capsys):
    (tmp_path / "d.txt").write_text("field = zero\nthis line is broken\n")
    assert run(tmp_path, "do-run", tmp_path / "d.txt") == 1
    assert "d.txt:2:" in capsys.readouterr().err
    (tmp_path / "e.txt").write_text("field = zero\nl = 3\n")
    assert run(tmp_path, "do-run", tmp_path / "e.txt") == 1
    (tmp_path / "f.txt").write_text("field = zero\nl = 3\nm = 3\nr = 1\ncolour = red\n")
    assert run(tmp_path, "do-run", tmp_path / "f.txt") == 1
    (tmp_path / "g.txt").write_text("field = zero\nl = 4\nm = 3\nr = 1\nscheme = leapfrog\n")
    assert run(tmp_path, "do-run", tmp_path / "g.txt") == 1


def test_track_svd_linear_path(tmp_path, capsys):
    rng = make_rng(8)
    write_matrix(tmp_path / "a0.txt", gapped_matrix(rng, 6, 5, 2))
    write_matrix(tmp_path / "a1.txt", 0.1 * rng.standard_normal((6, 5)))
    assert run(tmp_path, "track-svd", tmp_path / "a0.txt", tmp_path / "a1.txt", "-r", 2,
               "--dt", 1e-2, "--record-stride", 10) == 0
    out = capsys.readouterr().out.split()
    assert out[0] == "terminal_error" and float(out[1]) <= 1e-6
    assert len(rows(tmp_path / "tracking.csv")) == 11


def test_track_svd_crossing(tmp_path, capsys):
    write_matrix(tmp_path / "a0.txt", np.diag([2.0, 1.0]))
    write_matrix(tmp_path / "a1.txt", np.diag([-2.0, 0.0]))
    assert run(tmp_path, "track-svd", tmp_path / "a0.txt", tmp_path / "a1.txt", "-r", 1, "--dt", 1e-2) == 3


def test_optimize_command(tmp_path, capsys):
    T = gapped_matrix(make_rng(9), 8, 6, 2)
    write_matrix(tmp_path / "t.txt", T)
    assert run(tmp_path, "optimize", tmp_path / "t.txt", "-r", 2, "--method", "cg") == 0
    assert capsys.readouterr().out.startswith("status converged")
    assert header(tmp_path / "trace_cg.csv") == ["iter", "J", "grad_norm", "step_size", "status"]
    p = read_point(tmp_path / "result_cg.txt")
    assert np.linalg.norm(p.dense() - truncate(T, 2)[0].dense()) <= 1e-6


def test_experiment_command(tmp_path, capsys):
    assert run(tmp_path, "experiment", "curvature-audit", "--param", "n=3") == 0
    out = capsys.readouterr().out
    assert out.startswith("PASS")
    assert (tmp_path / "curvature.csv").exists() and (tmp_path / "summary.txt").exists()
    assert run(tmp_path, "experiment", "curvature-audit", "--param", "nope=3") == 1
    assert run(tmp_path, "experiment", "curvature-audit", "--param", "tol=-1") == 4
