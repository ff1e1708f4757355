import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from netshift import cli
from netshift.data_io import load_source_dataset, read_csv_rows, write_csv

FIXTURES = Path(__file__).parent / "fixtures" / "toy"


def _run(command, config, out_dir, seed=None):
    argv = [command, "--config", str(config), "--out", str(out_dir)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    return cli.main(argv)


def _write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


class TestBoundsCommand:
    def test_toy_fixture_matches_closed_forms(self, tmp_path):
        out = tmp_path / "out"
        assert _run("bounds", FIXTURES / "bounds_config.json", out) == 0
        rows = read_csv_rows(out / "bounds.csv")
        alpha_star = 0.4
        for row in rows:
            delta = row["delta"]
            if row["side"] == "upper":
                want = min(1.0, alpha_star + delta)
            else:
                want = max(0.0, alpha_star - delta)
            assert row["point"] == pytest.approx(want, abs=1e-9)
            # noiseless outcome: intervals collapse onto the point
            assert row["ci_lo"] == pytest.approx(row["point"], abs=1e-8)
            assert row["ci_hi"] == pytest.approx(row["point"], abs=1e-8)

    def test_huge_radius_gives_trivial_bounds(self, tmp_path):
        config = json.loads((FIXTURES / "bounds_config.json").read_text())
        config["deltas"] = [50.0]
        config["data"]["units"] = str(FIXTURES / "units.csv")
        config["data"]["edges"] = str(FIXTURES / "edges.csv")
        config["pi_star"] = {"file": str(FIXTURES / "pi_star.json")}
        path = _write_config(tmp_path, "big.json", config)
        out = tmp_path / "out"
        assert _run("bounds", path, out) == 0
        rows = read_csv_rows(out / "bounds.csv")
        by_side = {row["side"]: row["point"] for row in rows}
        assert by_side["upper"] == pytest.approx(1.0, abs=1e-9)
        assert by_side["lower"] == pytest.approx(0.0, abs=1e-9)

    def test_rerun_is_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert _run("bounds", FIXTURES / "bounds_config.json", out_a) == 0
        assert _run("bounds", FIXTURES / "bounds_config.json", out_b) == 0
        for name in ("bounds.csv", "contributions.csv", "audit.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        out = tmp_path / "out"
        assert _run("bounds", FIXTURES / "bounds_config.json", out, seed=77) == 0
        rows = read_csv_rows(out / "bounds.csv")
        assert all(row["seed"] == 77 for row in rows)

    def test_emitted_csv_round_trips(self, tmp_path):
        out = tmp_path / "out"
        assert _run("bounds", FIXTURES / "bounds_config.json", out) == 0
        rows = read_csv_rows(out / "bounds.csv")
        header = list(rows[0])
        write_csv(tmp_path / "copy.csv", header, rows)
        assert (tmp_path / "copy.csv").read_bytes() == (out / "bounds.csv").read_bytes()

    def test_unknown_config_key_is_config_error(self, tmp_path):
        config = json.loads((FIXTURES / "bounds_config.json").read_text())
        config["fruit"] = "pear"
        path = _write_config(tmp_path, "bad.json", config)
        assert _run("bounds", path, tmp_path / "out") == 2

    def test_missing_config_file_is_config_error(self, tmp_path):
        assert _run("bounds", tmp_path / "nope.json", tmp_path / "out") == 2

    def test_missing_units_column_is_data_error(self, tmp_path):
        units = pd.read_csv(FIXTURES / "units.csv").rename(columns={"y": "outcome"})
        units.to_csv(tmp_path / "units.csv", index=False)
        config = json.loads((FIXTURES / "bounds_config.json").read_text())
        config["data"]["units"] = str(tmp_path / "units.csv")
        config["data"]["edges"] = str(FIXTURES / "edges.csv")
        config["pi_star"] = {"file": str(FIXTURES / "pi_star.json")}
        path = _write_config(tmp_path, "bad_units.json", config)
        assert _run("bounds", path, tmp_path / "out") == 3

    def test_rank_deficient_basis_is_numerical_error(self, tmp_path):
        # the degree basis is collinear when only degrees {0, 1} occur
        config = json.loads((FIXTURES / "bounds_config.json").read_text())
        config["basis"] = "default"
        config["data"]["units"] = str(FIXTURES / "units.csv")
        config["data"]["edges"] = str(FIXTURES / "edges.csv")
        config["pi_star"] = {"file": str(FIXTURES / "pi_star.json")}
        path = _write_config(tmp_path, "collinear.json", config)
        assert _run("bounds", path, tmp_path / "out") == 4

    def test_shape_mode_emits_point_bounds(self, tmp_path):
        config = json.loads((FIXTURES / "bounds_config.json").read_text())
        config["shape"] = "monotone"
        config["data"]["units"] = str(FIXTURES / "units.csv")
        config["data"]["edges"] = str(FIXTURES / "edges.csv")
        config["pi_star"] = {"file": str(FIXTURES / "pi_star.json")}
        config["deltas"] = [0.5]
        path = _write_config(tmp_path, "shape.json", config)
        out = tmp_path / "out"
        assert _run("bounds", path, out) == 0
        rows = read_csv_rows(out / "bounds.csv")
        upper = [r for r in rows if r["side"] == "upper"][0]
        # nonincreasing mass caps P(degree 1) at one half
        assert upper["point"] == pytest.approx(0.5, abs=1e-9)
        assert upper["ci_lo"] == ""

    def test_decomposition_flag(self, tmp_path):
        config = json.loads((FIXTURES / "bounds_config.json").read_text())
        config["decompose"] = True
        config["data"]["units"] = str(FIXTURES / "units.csv")
        config["data"]["edges"] = str(FIXTURES / "edges.csv")
        config["pi_star"] = {"file": str(FIXTURES / "pi_star.json")}
        path = _write_config(tmp_path, "decomp.json", config)
        out = tmp_path / "out"
        assert _run("bounds", path, out) == 0
        rows = read_csv_rows(out / "decomposition.csv")
        components = {row["component"] for row in rows}
        assert components == {"direct", "spill"}


class TestWassersteinCommand:
    def test_identical_files_give_zero(self, tmp_path):
        config = _write_config(
            tmp_path,
            "w.json",
            {"files": [str(FIXTURES / "pi_star.json"), str(FIXTURES / "pi_star.json")], "q": 2.0},
        )
        out = tmp_path / "out"
        assert _run("wasserstein", config, out) == 0
        rows = read_csv_rows(out / "wasserstein.csv")
        assert rows[0]["distance"] == 0.0

    def test_bernoulli_files(self, tmp_path):
        (tmp_path / "a.json").write_text(json.dumps({"support": [0, 1], "mass": [0.6, 0.4]}))
        (tmp_path / "b.json").write_text(json.dumps({"support": [0, 1], "mass": [0.3, 0.7]}))
        config = _write_config(
            tmp_path, "w.json", {"files": ["a.json", "b.json"], "q": 1.0}
        )
        out = tmp_path / "out"
        assert _run("wasserstein", config, out) == 0
        rows = read_csv_rows(out / "wasserstein.csv")
        assert rows[0]["distance"] == pytest.approx(0.3, abs=1e-12)

    def test_dataset_mode_matches_direct_computation(self, tmp_path):
        from netshift import degree_dist_conditional, wasserstein
        from netshift.simulation import DGPConfig, simulate_once

        cfg = DGPConfig(n=200, replications=1, B=10)
        for tag, rep in (("src", 0), ("tgt", 1)):
            data, _ = simulate_once(cfg, (41, 0, rep))
            _dump_dataset(tmp_path, tag, data)
        config = _write_config(
            tmp_path,
            "w.json",
            {
                "q": 2.0,
                "source": _dataset_spec(tmp_path, "src"),
                "other": _dataset_spec(tmp_path, "tgt"),
            },
        )
        out = tmp_path / "out"
        assert _run("wasserstein", config, out) == 0
        rows = read_csv_rows(out / "wasserstein.csv")
        src = load_source_dataset(
            tmp_path / "src_units.csv", tmp_path / "src_edges.csv",
            outcome="y", treatment="d", categorical=("x1",), ordered=("x2",),
        )
        tgt = load_source_dataset(
            tmp_path / "tgt_units.csv", tmp_path / "tgt_edges.csv",
            outcome="y", treatment="d", categorical=("x1",), ordered=("x2",),
        )
        assert rows
        for row in rows:
            cell = tuple(int(v) for v in str(row["x"]).split("|"))
            want = wasserstein(
                degree_dist_conditional(tgt, cell), degree_dist_conditional(src, cell), 2.0
            )
            assert row["distance"] == pytest.approx(want, abs=1e-12)


class TestSimulateCommand:
    def test_single_replication_smoke(self, tmp_path):
        config = _write_config(
            tmp_path,
            "s.json",
            {
                "n": 300,
                "rho": 0.3,
                "deltas": [0.1],
                "B": 15,
                "replications": 1,
                "bandwidth": [0.3, 0.3],
                "seed": 5,
            },
        )
        out = tmp_path / "out"
        assert _run("simulate", config, out) == 0
        text = (out / "coverage.csv").read_text()
        assert "cov95_delta=0.1" in text
        value = float(text.splitlines()[1].split(",")[5])
        assert value in (0.0, 1.0)

    def test_rerun_is_byte_identical(self, tmp_path):
        config = _write_config(
            tmp_path,
            "s.json",
            {
                "n": 300,
                "deltas": [0.1],
                "B": 10,
                "replications": 2,
                "bandwidth": [0.3, 0.3],
                "seed": 8,
            },
        )
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert _run("simulate", config, out_a) == 0
        assert _run("simulate", config, out_b) == 0
        assert (out_a / "coverage.csv").read_bytes() == (out_b / "coverage.csv").read_bytes()


class TestGraphcheckCommand:
    def test_graphic_distribution_realizes(self, tmp_path):
        config = _write_config(
            tmp_path,
            "g.json",
            {
                "distribution": {"support": [0, 1, 2, 3], "mass": [0.25, 0.25, 0.25, 0.25]},
                "n": 8,
                "seed": 2,
            },
        )
        out = tmp_path / "out"
        assert _run("graphcheck", config, out) == 0
        report = json.loads((out / "graphcheck.json").read_text())
        assert report["graphic"] is True
        assert report["model"] == "exact"
        edges = read_csv_rows(out / "edges.csv")
        counts = np.zeros(8, dtype=int)
        for row in edges:
            counts[row["src"]] += 1
            counts[row["dst"]] += 1
        assert sorted(counts.tolist()) == [0, 0, 1, 1, 2, 2, 3, 3]

    def test_non_graphic_falls_back_to_expected_degrees(self, tmp_path):
        # five nodes all wanting degree 3 gives an odd total
        config = _write_config(
            tmp_path,
            "g.json",
            {"distribution": {"support": [3], "mass": [1.0]}, "n": 5, "seed": 2},
        )
        out = tmp_path / "out"
        assert _run("graphcheck", config, out) == 0
        report = json.loads((out / "graphcheck.json").read_text())
        assert report["graphic"] is False
        assert report["model"] == "chung-lu"

    def test_faceset_input(self, tmp_path):
        from netshift import BallSpec, DiscreteDist, enumerate_face

        ball = BallSpec(DiscreteDist([1, 2, 3], [0.5, 0.5, 0.0]), 1.0, 1.0)
        face = enumerate_face([1.0, 2.0, 3.0], ball, 0.0, "max")
        (tmp_path / "face.json").write_text(json.dumps(face.to_json()))
        config = _write_config(
            tmp_path, "g.json", {"faceset": "face.json", "n": 10, "seed": 4}
        )
        out = tmp_path / "out"
        assert _run("graphcheck", config, out) == 0
        report = json.loads((out / "graphcheck.json").read_text())
        assert len(report["plans"]) == len(face)
        assert all(isinstance(p["graphic"], bool) for p in report["plans"])


def _dump_dataset(tmp_path, tag, data):
    units = pd.DataFrame(
        {
            "id": np.arange(data.n),
            "y": data.y,
            "d": data.d,
            "x1": data.x_cat[:, 0],
            "x2": data.x_ord[:, 0],
        }
    )
    units.to_csv(tmp_path / f"{tag}_units.csv", index=False)
    coo = data.adjacency.tocoo()
    edges = pd.DataFrame({"src": coo.row, "dst": coo.col, "directed": 1})
    edges.to_csv(tmp_path / f"{tag}_edges.csv", index=False)


def _dataset_spec(tmp_path, tag):
    return {
        "units": str(tmp_path / f"{tag}_units.csv"),
        "edges": str(tmp_path / f"{tag}_edges.csv"),
        "outcome": "y",
        "treatment": "d",
        "categorical": ["x1"],
        "ordered": ["x2"],
    }


class TestSplitSample:
    def test_point_estimate_lies_in_bands_at_observed_radius(self, tmp_path):
        """Source-fitted bounds cover the target plug-in value once the ball is wide enough."""
        from netshift import (
            BasisSpec,
            TargetSpec,
            atte_point,
            bound_profile,
            contrast_vector,
            degree_dist_conditional,
            fit_vc,
            wasserstein,
        )
        from netshift.simulation import DGPConfig, simulate_once

        cfg = DGPConfig(n=400, replications=1, B=10)
        source, _ = simulate_once(cfg, (51, 0, 0))
        target_data, _ = simulate_once(cfg, (51, 0, 1))
        _dump_dataset(tmp_path, "source", source)
        src = load_source_dataset(
            tmp_path / "source_units.csv",
            tmp_path / "source_edges.csv",
            outcome="y",
            treatment="d",
            categorical=("x1",),
            ordered=("x2",),
        )
        basis = BasisSpec()
        fit = fit_vc(src, basis, (0.3, 0.3))
        cells = src.cells()
        p = {cell: float(np.sum(src.cell_mask(cell))) / src.n for cell in cells}
        degrees = np.arange(5)
        m_hat = contrast_vector(fit, basis, p, degrees)
        pi_star = {cell: degree_dist_conditional(src, cell) for cell in cells}
        pi_target = {cell: degree_dist_conditional(target_data, cell) for cell in cells}
        radius = max(
            wasserstein(pi_target[cell], pi_star[cell], 2.0) for cell in cells
        )
        spec = TargetSpec(degrees=degrees, p=p, pi_star=pi_star, deltas=(radius,), q=2.0)
        balls = spec.balls(radius)
        hi = sum(bound_profile(m_hat, balls, "max").values())
        lo = sum(bound_profile(m_hat, balls, "min").values())
        point = atte_point(m_hat, pi_target, p)
        assert lo - 1e-9 <= point <= hi + 1e-9


class TestPsdPolicy:
    def test_strict_policy_fails_on_adjacency_kernel(self, tmp_path):
        """The path-weighted distance puts neighbors at distance zero, which is indefinite."""
        from netshift.simulation import DGPConfig, simulate_once

        cfg = DGPConfig(n=300, replications=1, B=10)
        data, _ = simulate_once(cfg, (61, 0, 0))
        _dump_dataset(tmp_path, "psd", data)
        units = pd.read_csv(tmp_path / "psd_units.csv")
        units["x2f"] = units["x2"].astype(float)
        rng = np.random.default_rng(0)
        units["z"] = rng.standard_normal(len(units))
        units.to_csv(tmp_path / "psd_units.csv", index=False)
        config = {
            "data": {
                **_dataset_spec(tmp_path, "psd"),
                "numeric_columns": ["x2f", "z"],
            },
            "deltas": [0.1],
            "q": 2.0,
            "pi_star": "uniform",
            "bandwidth": [0.3, 0.3],
            "c_d": 4.0,
            "distance_columns": ["x2f", "z"],
            "psd_policy": "strict",
            "B": 10,
            "seed": 1,
        }
        path = _write_config(tmp_path, "strict.json", config)
        assert _run("bounds", path, tmp_path / "out") == 4
        config["psd_policy"] = "truncate"
        path = _write_config(tmp_path, "truncate.json", config)
        assert _run("bounds", path, tmp_path / "out2") == 0


def test_bounds_emits_faces_for_graphcheck(tmp_path):
    out = tmp_path / "out"
    assert _run("bounds", FIXTURES / "bounds_config.json", out) == 0
    payload = json.loads((out / "faces.json").read_text())
    assert payload
    key, face = next(iter(sorted(payload.items())))
    assert "plans" in face and "degrees" in face
    # each emitted face feeds straight into graphcheck
    (tmp_path / "face.json").write_text(json.dumps(face))
    config = _write_config(tmp_path, "g.json", {"faceset": "face.json", "n": 10, "seed": 0})
    assert _run("graphcheck", config, tmp_path / "gout") == 0
