"""Tests for the bridge command line."""

import csv
import json

import pytest
from typer.testing import CliRunner

from trotterbridge import __version__
from trotterbridge.cli import app
from trotterbridge.config import settings
from trotterbridge.trotter_map import ClassicalLatticeSpec

runner = CliRunner()

QUICK_MC = {"seed": 5, "chains": 2, "sweeps": 400, "burn_in": 80, "bins": 8}


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


class TestGlobalOptions:
    """Tests for the callback options."""

    def test_version(self):
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_help_lists_commands(self):
        result = runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        assert "compare" in result.output
        assert "propagate" in result.output


class TestMap:
    """Tests for the map command."""

    def test_writes_lattices(self, config_file, tmp_path):
        out = tmp_path / "lattices"
        result = runner.invoke(app, ["map", "--config", str(config_file()), "--n", "8", "--out", str(out)])
        assert result.exit_code == 0
        lattice = ClassicalLatticeSpec.from_json((out / "lattice_n8.json").read_text(encoding="utf-8"))
        assert lattice.num_spins == 32
        assert not (out / "lattice_n16.json").exists()

    def test_zero_field_exits_2(self, config_file, tmp_path):
        path = config_file(quantum={"sites": 4, "coupling": 1.0, "field": 0.0, "beta": 1.0})
        result = runner.invoke(app, ["map", "--config", str(path), "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_missing_config_exits_4(self, tmp_path):
        result = runner.invoke(app, ["map", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
        assert result.exit_code == 4

    def test_invalid_config_exits_2(self, config_file, tmp_path):
        path = config_file(trotter_n=[16, 8])
        result = runner.invoke(app, ["map", "--config", str(path), "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_bad_trotter_list(self, config_file, tmp_path):
        result = runner.invoke(app, ["map", "--config", str(config_file()), "--n", "8,x", "--out", str(tmp_path)])
        assert result.exit_code == 2


class TestExactAndEval:
    """Tests for the exact and eval commands."""

    def test_exact_json(self, config_file, tmp_path):
        result = runner.invoke(
            app, ["exact", "--config", str(config_file()), "--format", "json", "--out", str(tmp_path)]
        )
        assert result.exit_code == 0
        document = json.loads((tmp_path / "exact.json").read_text(encoding="utf-8"))
        assert document["kind"] == "correlators"
        assert document["rows"][0]["method"] == "exact-quantum"

    def test_eval_from_config(self, config_file, tmp_path):
        path = config_file(trotter_n=[4])
        result = runner.invoke(
            app, ["eval", "--config", str(path), "--method", "enum,transfer-matrix", "--out", str(tmp_path)]
        )
        assert result.exit_code == 0
        rows = read_rows(tmp_path / "eval.csv")
        assert [row["method"] for row in rows] == ["enum", "transfer-matrix"]
        assert float(rows[0]["c_z"]) == pytest.approx(float(rows[1]["c_z"]), abs=1e-12)

    def test_eval_from_lattice(self, config_file, tmp_path):
        runner.invoke(app, ["map", "--config", str(config_file()), "--n", "4", "--out", str(tmp_path)])
        result = runner.invoke(
            app,
            [
                "eval",
                "--lattice",
                str(tmp_path / "lattice_n4.json"),
                "--method",
                "enum",
                "--out",
                str(tmp_path / "eval"),
            ],
        )
        assert result.exit_code == 0
        (row,) = read_rows(tmp_path / "eval" / "eval.csv")
        assert row["method"] == "enum"
        assert row["n"] == "4"

    def test_eval_unknown_method(self, config_file, tmp_path):
        runner.invoke(app, ["map", "--config", str(config_file()), "--n", "4", "--out", str(tmp_path)])
        result = runner.invoke(app, ["eval", "--lattice", str(tmp_path / "lattice_n4.json"), "--method", "dmrg"])
        assert result.exit_code == 2

    def test_enumeration_cap_exits_3(self, config_file, tmp_path, mocker):
        mocker.patch.object(settings, "max_spins", 8)
        path = config_file(trotter_n=[4])
        result = runner.invoke(app, ["eval", "--config", str(path), "--method", "enum", "--out", str(tmp_path)])
        assert result.exit_code == 3


class TestMcAndCompare:
    """Tests for the mc and compare commands."""

    def test_mc_writes_trace(self, config_file, tmp_path):
        path = config_file(trotter_n=[4], methods=["exact-quantum", "mc"], mc=QUICK_MC)
        result = runner.invoke(app, ["mc", "--config", str(path), "--trace", "--out", str(tmp_path)])
        assert result.exit_code == 0
        (row,) = read_rows(tmp_path / "mc.csv")
        assert float(row["c_x_err"]) > 0
        assert len(read_rows(tmp_path / "trace.csv")) == 5 * 2 * 8

    def test_mc_from_lattice_uses_sampler_file(self, config_file, tmp_path):
        runner.invoke(app, ["map", "--config", str(config_file()), "--n", "4", "--out", str(tmp_path)])
        sampler = tmp_path / "sampler.json"
        sampler.write_text(json.dumps(QUICK_MC), encoding="utf-8")
        result = runner.invoke(
            app,
            [
                "mc",
                "--lattice",
                str(tmp_path / "lattice_n4.json"),
                "--config",
                str(sampler),
                "--trace",
                "--out",
                str(tmp_path / "mc"),
            ],
        )
        assert result.exit_code == 0
        (row,) = read_rows(tmp_path / "mc" / "mc.csv")
        assert row["n"] == "4"
        assert float(row["acceptance"]) > 0
        trace = read_rows(tmp_path / "mc" / "trace.csv")
        assert len(trace) == 5 * 2 * 8
        assert {r["observable"] for r in trace} == {f"n4:{name}" for name in ("m_x", "m_x_next", "c_x", "c_y", "c_z")}

    def test_mc_from_lattice_reads_experiment_mc_section(self, config_file, tmp_path):
        path = config_file(trotter_n=[4], methods=["exact-quantum", "mc"], mc=QUICK_MC)
        runner.invoke(app, ["map", "--config", str(path), "--out", str(tmp_path / "lattices")])
        outputs = []
        for seed in ("1", "2"):
            result = runner.invoke(
                app,
                [
                    "mc",
                    "--lattice",
                    str(tmp_path / "lattices" / "lattice_n4.json"),
                    "--config",
                    str(path),
                    "--seed",
                    seed,
                    "--trace",
                    "--out",
                    str(tmp_path / seed),
                ],
            )
            assert result.exit_code == 0
            assert len(read_rows(tmp_path / seed / "trace.csv")) == 5 * 2 * 8
            outputs.append((tmp_path / seed / "trace.csv").read_bytes())
        assert outputs[0] != outputs[1]

    def test_mc_from_lattice_bad_sampler_exits_2(self, config_file, tmp_path):
        runner.invoke(app, ["map", "--config", str(config_file()), "--n", "4", "--out", str(tmp_path)])
        sampler = tmp_path / "sampler.json"
        sampler.write_text(json.dumps({"chains": 0}), encoding="utf-8")
        result = runner.invoke(
            app, ["mc", "--lattice", str(tmp_path / "lattice_n4.json"), "--config", str(sampler)]
        )
        assert result.exit_code == 2

    def test_compare_reruns_are_byte_identical(self, config_file, tmp_path):
        path = config_file(trotter_n=[4, 8], methods=["exact-quantum", "transfer-matrix", "mc"], mc=QUICK_MC)
        for name in ("first", "second"):
            result = runner.invoke(
                app, ["compare", "--config", str(path), "--seed", "11", "--out", str(tmp_path / name)]
            )
            assert result.exit_code == 0
        first = (tmp_path / "first" / "compare.csv").read_bytes()
        assert first == (tmp_path / "second" / "compare.csv").read_bytes()

        rows = read_rows(tmp_path / "first" / "compare.csv")
        assert [(row["method"], row["n"]) for row in rows] == [
            ("transfer-matrix", "4"),
            ("transfer-matrix", "8"),
            ("mc", "4"),
            ("mc", "8"),
        ]
        assert rows[0]["convergence_ratio"] != ""
        assert rows[1]["convergence_ratio"] == ""

    def test_seed_changes_sampled_rows(self, config_file, tmp_path):
        path = config_file(trotter_n=[4], methods=["exact-quantum", "mc"], mc=QUICK_MC)
        for seed in ("1", "2"):
            runner.invoke(app, ["compare", "--config", str(path), "--seed", seed, "--out", str(tmp_path / seed)])
        assert (tmp_path / "1" / "compare.csv").read_bytes() != (tmp_path / "2" / "compare.csv").read_bytes()

    def test_compare_without_reference_exits_2(self, config_file, tmp_path):
        path = config_file(trotter_n=[4])
        result = runner.invoke(
            app, ["compare", "--config", str(path), "--method", "transfer-matrix", "--out", str(tmp_path)]
        )
        assert result.exit_code == 2


class TestSweep:
    """Tests for the sweep command."""

    def test_sweep_rows(self, config_file, tmp_path):
        path = config_file(trotter_n=[4], sweep={"parameter": "field_ratio", "values": [0.5, 2.0]})
        result = runner.invoke(app, ["sweep", "--config", str(path), "--out", str(tmp_path)])
        assert result.exit_code == 0
        rows = read_rows(tmp_path / "sweep.csv")
        assert [float(row["field"]) for row in rows] == [0.5, 2.0]


class TestPropagate:
    """Tests for the propagate command."""

    def test_real_time(self, tmp_path):
        result = runner.invoke(
            app, ["propagate", "-E", "1", "-D", "1", "-t", "1", "--m", "1,2,10", "--out", str(tmp_path)]
        )
        assert result.exit_code == 0
        rows = read_rows(tmp_path / "propagate.csv")
        assert [row["m"] for row in rows] == ["1", "2", "10"]
        assert all(float(row["deviation"]) <= 1e-10 for row in rows)

    def test_imaginary_time(self, tmp_path):
        result = runner.invoke(app, ["propagate", "--beta", "1", "--m", "8", "--out", str(tmp_path)])
        assert result.exit_code == 0
        (row,) = read_rows(tmp_path / "propagate.csv")
        assert float(row["trace_chain"]) == pytest.approx(float(row["trace_exact"]), rel=1e-10)

    def test_zero_tunnelling_exits_2(self, tmp_path):
        result = runner.invoke(app, ["propagate", "-D", "0", "--out", str(tmp_path)])
        assert result.exit_code == 2


class TestSchema:
    """Tests for the schema command."""

    def test_schema_file(self, tmp_path):
        result = runner.invoke(app, ["schema", "--out", str(tmp_path)])
        assert result.exit_code == 0
        document = json.loads((tmp_path / "schema.json").read_text(encoding="utf-8"))
        assert set(document["records"]) == {"correlators", "compare", "sweep", "propagate", "trace"}
