import json

import numpy as np
import pytest

from leastres import serialize
from leastres.cli import main
from leastres.geometry import Domain, GridFn, PolyBody


@pytest.fixture()
def parab_mesh(tmp_path):
    # 1/32 keeps the curvature-induced cone widths below the crease scale
    d = Domain.square(-1.0, 1.0, 1 / 32)
    u = GridFn.from_callable(d, lambda x, y: x ** 2 + 10 * y ** 2, 12.0)
    path = tmp_path / "mesh.json"
    path.write_text(serialize.gridfn_to_json(u))
    return path


class TestSerialize:
    def test_gridfn_roundtrip_bytes(self, tmp_path):
        d = Domain.disk((0.0, 0.0), 1.0, 0.125)
        u = GridFn.from_callable(d, lambda x, y: x ** 2 + 0.5 * y ** 2, 2.0)
        text = serialize.gridfn_to_json(u)
        back = serialize.gridfn_from_json(text)
        assert serialize.gridfn_to_json(back) == text
        assert np.array_equal(back.values, u.values)

    def test_gridfn_permuted_nodes(self):
        d = Domain.square(0.0, 1.0, 0.25)
        u = GridFn.from_callable(d, lambda x, y: x + y, 2.0)
        obj = json.loads(serialize.gridfn_to_json(u))
        obj["nodes"] = obj["nodes"][::-1]
        back = serialize.gridfn_from_json(serialize.dumps(obj))
        assert np.allclose(back.values, u.values)

    def test_body_roundtrip(self):
        g = np.array([0.0, 1.0])
        C = PolyBody.from_points([[x, y, z] for x in g for y in g for z in g])
        text = serialize.body_to_json(C)
        back = serialize.body_from_json(text)
        assert serialize.body_to_json(back) == text

    def test_obj_export(self):
        g = np.array([0.0, 1.0])
        C = PolyBody.from_points([[x, y, z] for x in g for y in g for z in g])
        obj = serialize.body_to_obj(C)
        assert obj.count("\nv ") == 8
        assert obj.count("\nf ") == 6  # merged square faces

    def test_nan_rejected(self):
        with pytest.raises(RuntimeError):
            serialize.assert_finite({"a": [1.0, float("nan")]})
        with pytest.raises(RuntimeError):
            serialize.dumps({"x": float("inf")})


class TestToyCommand:
    def test_parabola_sweep(self, tmp_path):
        csv = tmp_path / "toy.csv"
        js = tmp_path / "toy.json"
        rc = main(["toy", "--u", "x^2", "--range", "-1", "1", "--o", "0", "-0.2",
                   "--f1", "newton1d", "--n", "11",
                   "--out-csv", str(csv), "--out-json", str(js)])
        assert rc == 0
        rows = csv.read_text().strip().splitlines()
        assert rows[0] == "s,F,chord,residual"
        assert len(rows) == 12
        resid = [abs(float(r.split(",")[3])) for r in rows[1:]]
        assert max(resid) <= 1e-8
        summary = json.loads(js.read_text())
        assert abs(summary["numeric_slope"] - summary["analytic_slope"]) < 1e-6

    def test_single_sample(self, tmp_path):
        csv = tmp_path / "toy.csv"
        rc = main(["toy", "--u", "x^2", "--o", "0", "-0.2", "--n", "1",
                   "--out-csv", str(csv)])
        assert rc == 0
        rows = csv.read_text().strip().splitlines()
        assert len(rows) == 2
        assert rows[1].startswith("0,")

    def test_nose_above_graph_exits_2(self):
        rc = main(["toy", "--u", "x^2", "--o", "0", "0.5", "--n", "5"])
        assert rc == 2


class TestStretchCommand:
    def test_report(self, parab_mesh, tmp_path):
        out = tmp_path / "report.json"
        rc = main(["stretch", "--mesh", str(parab_mesh), "--f", "newton",
                   "--x-check", "0", "0", "--eps", "0.02", "--samples", "9",
                   "--out", str(out)])
        assert rc == 0
        rep = json.loads(out.read_text())
        assert rep["site"]["z0"] == pytest.approx(-0.01)
        assert rep["coeffs_analytic"]["a3"] > rep["coeffs_analytic"]["a4"]
        assert len(rep["samples"]) == 9

    def test_flat_check_point_exits_2(self, tmp_path, capsys):
        d = Domain.square(-1.0, 1.0, 1 / 8)
        u = GridFn.from_callable(d, lambda x, y: np.maximum(np.abs(x) - 0.4, 0.0) + 0.2 * y ** 2, 4.0)
        path = tmp_path / "flat.json"
        path.write_text(serialize.gridfn_to_json(u))
        rc = main(["stretch", "--mesh", str(path), "--f", "newton",
                   "--x-check", "0", "0", "--eps", "0.05"])
        assert rc == 2
        assert "not extreme" in capsys.readouterr().err

    def test_positive_hessian_exits_2(self, parab_mesh, capsys):
        rc = main(["stretch", "--mesh", str(parab_mesh), "--f", "quadratic",
                   "--x-check", "0", "0", "--eps", "0.02"])
        assert rc == 2
        assert "no negative eigenvalue" in capsys.readouterr().err

    def test_missing_mesh_exits_3(self):
        rc = main(["stretch", "--mesh", "/nonexistent.json", "--f", "newton",
                   "--x-check", "0", "0", "--eps", "0.02"])
        assert rc == 3


class TestSolveVerifyRadial:
    def test_radial_csv_convex_monotone(self, tmp_path):
        csv = tmp_path / "radial.csv"
        rc = main(["radial", "--L", "1", "--M", "1", "--n", "200",
                   "--out-csv", str(csv), "--out-json", str(tmp_path / "r.json")])
        assert rc == 0
        rows = [r.split(",") for r in csv.read_text().strip().splitlines()[1:]]
        phi = np.array([float(r[1]) for r in rows])
        d = np.diff(phi)
        assert (d >= -1e-12).all()
        assert (np.diff(d) >= -1e-9).all()

    def test_solve_deterministic_bytes(self, tmp_path):
        args = ["solve", "--domain", "disk", "--R", "1", "--M", "1", "--f", "newton",
                "--grid", "12", "--budget", "300", "--seed", "7",
                "--stretch-cadence", "0"]
        rc = main(args + ["--out-dir", str(tmp_path / "a")])
        assert rc == 0
        rc = main(args + ["--out-dir", str(tmp_path / "b")])
        assert rc == 0
        for name in ("solution.json", "trace.csv", "report.json", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_verify_consumes_solution(self, tmp_path):
        rc = main(["solve", "--domain", "disk", "--R", "1", "--M", "1", "--f", "quadratic",
                   "--grid", "12", "--budget", "100", "--seed", "1",
                   "--stretch-cadence", "0", "--out-dir", str(tmp_path / "run")])
        assert rc == 0
        out = tmp_path / "verify.json"
        rc = main(["verify", "--mesh", str(tmp_path / "run" / "solution.json"),
                   "--f", "quadratic", "--out", str(out)])
        assert rc == 0
        rep = json.loads(out.read_text())
        assert rep["boundary"]["passed"]

    def test_export_obj(self, parab_mesh, tmp_path):
        out = tmp_path / "surface.obj"
        rc = main(["export-obj", "--mesh", str(parab_mesh), "--out", str(out)])
        assert rc == 0
        text = out.read_text()
        assert text.startswith("#")
        assert " -nan" not in text and "nan" not in text
