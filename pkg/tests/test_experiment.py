"""Tests for trotterbridge.experiment module."""

import json
import math

import pytest

from trotterbridge.experiment import (
    RECORD_MODELS,
    SCHEMA_VERSION,
    ConfigError,
    ConfigFileError,
    Method,
    OutputFormat,
    PropagateRow,
    McModel,
    load_config,
    load_sampler,
    quantum_reference,
    record_schema,
    render_records,
    run_compare,
    run_eval,
    run_exact,
    run_map,
    run_mc,
    run_propagate,
    run_sweep,
    trace_rows,
    validate_config,
)
from trotterbridge.spinchain_exact import QuantumChainSpec

BASE = {"quantum": {"sites": 4, "coupling": 1.0, "field": 1.0, "beta": 2.0}}
QUICK_MC = {"seed": 5, "chains": 2, "sweeps": 400, "burn_in": 80, "bins": 8}


def config(**overrides):
    return validate_config({**BASE, **overrides})


class TestExperimentConfig:
    """Tests for config validation and overrides."""

    def test_defaults(self):
        cfg = config()
        assert cfg.trotter_n == [8, 16, 32, 64]
        assert cfg.methods == [Method.EXACT_QUANTUM, Method.TRANSFER]
        assert cfg.format is OutputFormat.CSV
        assert cfg.mc is None
        assert not cfg.include_runtime

    def test_default_beta(self):
        cfg = validate_config({"quantum": {"sites": 4, "coupling": 0.5, "field": 2.0}})
        assert cfg.quantum.to_spec().beta == pytest.approx(10.0)

    @pytest.mark.parametrize("trotter_n", [[], [16, 8], [8, 8], [0, 8]])
    def test_trotter_n_rejected(self, trotter_n):
        with pytest.raises(ConfigError):
            config(trotter_n=trotter_n)

    def test_duplicate_methods(self):
        with pytest.raises(ConfigError):
            config(methods=["enum", "enum"])

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            config(methods=["exact-quantum", "dmrg"])

    def test_mc_section_required(self):
        with pytest.raises(ConfigError):
            config(methods=["exact-quantum", "mc"])

    def test_mc_section_without_mc(self):
        with pytest.raises(ConfigError):
            config(mc=QUICK_MC)

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc_info:
            config(trotter=[8])
        assert exc_info.value.exit_code == 2

    def test_invalid_chain(self):
        with pytest.raises(ConfigError):
            validate_config({"quantum": {"sites": 2, "coupling": 1.0, "field": 1.0}})

    def test_invalid_sampler(self):
        with pytest.raises(ConfigError):
            config(methods=["mc"], mc={"sweeps": 10, "burn_in": 20})

    def test_override_adds_default_sampler(self):
        cfg = config().with_overrides(methods=["exact-quantum", "mc"], seed=9)
        assert cfg.mc is not None
        assert cfg.mc.seed == 9
        assert cfg.classical_methods == [Method.MC]

    def test_override_drops_sampler(self):
        cfg = config(methods=["exact-quantum", "mc"], mc=QUICK_MC)
        assert cfg.with_overrides(methods=["exact-quantum", "enum"]).mc is None

    def test_override_trotter_n(self):
        assert config().with_overrides(trotter_n=[4, 8]).trotter_n == [4, 8]


class TestLoadConfig:
    """Tests for load_config function."""

    def test_reads_file(self, config_file):
        cfg = load_config(config_file())
        assert cfg.trotter_n == [8, 16]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError) as exc_info:
            load_config(tmp_path / "missing.json")
        assert exc_info.value.exit_code == 4

    def test_not_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{quantum", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)


class TestLoadSampler:
    """Tests for load_sampler function."""

    def test_bare_sampler(self, tmp_path):
        path = tmp_path / "sampler.json"
        path.write_text(json.dumps(QUICK_MC), encoding="utf-8")
        assert load_sampler(path) == McModel(**QUICK_MC)

    def test_mc_section_of_experiment(self, config_file):
        path = config_file(methods=["exact-quantum", "mc"], mc=QUICK_MC)
        assert load_sampler(path).to_config().bins == 8

    def test_experiment_without_mc_uses_defaults(self, config_file):
        assert load_sampler(config_file()) == McModel()

    def test_invalid_sampler(self, tmp_path):
        path = tmp_path / "sampler.json"
        path.write_text(json.dumps({"sweeps": 10, "bins": 32}), encoding="utf-8")
        with pytest.raises(ConfigError):
            load_sampler(path)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "sampler.json"
        path.write_text(json.dumps({"temperature": 1.0}), encoding="utf-8")
        with pytest.raises(ConfigError):
            load_sampler(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigFileError) as exc_info:
            load_sampler(tmp_path / "nope.json")
        assert exc_info.value.exit_code == 4


class TestRecords:
    """Tests for record rendering and the schema."""

    def test_schema_lists_every_record(self):
        schema = record_schema()
        assert schema["schema_version"] == SCHEMA_VERSION
        assert set(schema["records"]) == set(RECORD_MODELS)
        assert "max_abs_error" in schema["records"]["compare"]["properties"]

    def test_csv_columns_follow_model(self):
        rows = run_propagate(1.0, 1.0, 1.0, [1, 2])
        text = render_records("propagate", rows, "csv")
        header, *lines = text.splitlines()
        assert header.split(",") == list(PropagateRow.model_fields)
        assert len(lines) == 2

    def test_json_document(self):
        rows = run_propagate(1.0, 1.0, 1.0, [1])
        document = json.loads(render_records("propagate", rows, OutputFormat.JSON))
        assert document["schema_version"] == SCHEMA_VERSION
        assert document["kind"] == "propagate"
        assert document["rows"][0]["m"] == 1
        assert document["rows"][0]["path_sum_deviation"] is not None

    def test_rendering_is_stable(self):
        rows = run_propagate(0.3, 1.2, 2.0, [1, 5])
        assert render_records("propagate", rows, "csv") == render_records("propagate", rows, "csv")


class TestRunMap:
    """Tests for run_map function."""

    def test_one_lattice_per_n(self):
        lattices = run_map(config(trotter_n=[2, 4]))
        assert list(lattices) == [2, 4]
        assert lattices[4].num_spins == 16
        assert lattices[4].beta == 2.0


class TestRunExactAndEval:
    """Tests for run_exact and run_eval functions."""

    def test_exact_record(self):
        record = run_exact(config())
        assert record.method == "exact-quantum"
        assert record.n is None
        assert record.beta == 2.0
        assert record.concurrence >= 0
        assert record.m_x_next == pytest.approx(record.m_x)

    def test_eval_records(self):
        records = run_eval(config(trotter_n=[2, 4], methods=["exact-quantum", "enum", "transfer-matrix"]))
        assert [(r.method, r.n) for r in records] == [
            ("enum", 2),
            ("enum", 4),
            ("transfer-matrix", 2),
            ("transfer-matrix", 4),
        ]
        assert records[0].c_z == pytest.approx(records[2].c_z, abs=1e-12)
        assert records[1].free_energy == pytest.approx(records[3].free_energy, rel=1e-12)
        assert all(r.c_x_err == 0.0 for r in records)

    def test_eval_skips_sampling(self):
        records = run_eval(config(trotter_n=[4], methods=["transfer-matrix", "mc"], mc=QUICK_MC))
        assert [r.method for r in records] == ["transfer-matrix"]


class TestRunMc:
    """Tests for run_mc function."""

    def test_records_and_trace(self):
        cfg = config(trotter_n=[4, 8], methods=["mc"], mc=QUICK_MC)
        records, trace = run_mc(cfg)
        assert [r.n for r in records] == [4, 8]
        assert all(r.method == "mc" and r.c_x_err > 0 for r in records)
        assert 0 < records[0].acceptance < 1
        # five observables x two chains x eight bins, per n
        assert len(trace) == 2 * 5 * 2 * 8
        assert trace[0].observable == "n4:m_x"

    def test_trace_rows_helper(self):
        cfg = config(trotter_n=[4], methods=["mc"], mc=QUICK_MC)
        _, trace = run_mc(cfg)
        assert trace_rows(4, {}) == []
        assert {row.chain for row in trace} == {0, 1}
        assert {row.bin for row in trace} == set(range(8))

    def test_reproducible(self):
        cfg = config(trotter_n=[4], methods=["mc"], mc=QUICK_MC)
        first, _ = run_mc(cfg)
        second, _ = run_mc(cfg)
        assert render_records("correlators", first, "csv") == render_records("correlators", second, "csv")


class TestRunCompare:
    """Tests for run_compare function."""

    def test_rows_and_convergence(self):
        rows = run_compare(config(trotter_n=[8, 16]))
        assert [(r.method, r.n) for r in rows] == [("transfer-matrix", 8), ("transfer-matrix", 16)]

        first, second = rows
        assert first.convergence_ratio == pytest.approx(first.max_abs_error / second.max_abs_error)
        assert first.convergence_ratio > 1.6
        assert second.convergence_ratio is None
        assert first.free_energy_quantum == second.free_energy_quantum
        assert second.runtime_ms is None

    def test_abs_errors(self):
        (row,) = run_compare(config(trotter_n=[16]))
        for name in ("m_x", "c_x", "c_y", "c_z"):
            value = getattr(row, name)
            assert getattr(row, f"{name}_abs_error") == pytest.approx(abs(value - getattr(row, f"{name}_quantum")))
        assert row.max_abs_error == max(
            row.m_x_abs_error, row.c_x_abs_error, row.c_y_abs_error, row.c_z_abs_error
        )
        assert row.convergence_ratio is None

    def test_free_energy_close(self):
        (row,) = run_compare(config(trotter_n=[32]))
        assert row.free_energy == pytest.approx(row.free_energy_quantum, abs=5e-2)

    def test_runtime_opt_in(self):
        (row,) = run_compare(config(trotter_n=[4], include_runtime=True))
        assert row.runtime_ms >= 0

    def test_needs_quantum_reference(self):
        with pytest.raises(ConfigError):
            run_compare(config(trotter_n=[4], methods=["transfer-matrix"]))

    def test_needs_classical_method(self):
        with pytest.raises(ConfigError):
            run_compare(config(trotter_n=[4], methods=["exact-quantum"]))

    def test_transfer_rows_carry_trotter_error(self):
        rows = run_compare(config(trotter_n=[16, 32]))
        for row in rows:
            assert row.trotter_err > 0
            assert row.max_abs_error <= row.trotter_err
            assert row.rdm_consistent
            assert row.concurrence == pytest.approx(row.concurrence_quantum, abs=3 * row.trotter_err)
        assert rows[1].trotter_err < rows[0].trotter_err

    def test_eval_record_trotter_error(self):
        (record,) = run_eval(config(trotter_n=[16]))
        assert record.trotter_err > 0
        assert record.c_x_err == 0.0

    def test_with_sampling(self):
        rows = run_compare(config(trotter_n=[4], methods=["exact-quantum", "mc"], mc=QUICK_MC))
        (row,) = rows
        assert row.method == "mc"
        assert row.m_x_err > 0
        assert row.rdm_consistent == (row.concurrence is not None)


class TestRunSweep:
    """Tests for run_sweep function."""

    def test_rows_per_grid_point(self):
        cfg = config(trotter_n=[4, 8], sweep={"parameter": "field_ratio", "values": [0.5, 1.0, 2.0]})
        rows = run_sweep(cfg)
        assert [r.value for r in rows] == [0.5, 1.0, 2.0]
        assert [r.field for r in rows] == [0.5, 1.0, 2.0]
        assert all(r.n == 8 and r.method == "transfer-matrix" for r in rows)
        assert all(r.rdm_consistent == (r.concurrence_classical is not None) for r in rows)

        reference = quantum_reference(QuantumChainSpec(sites=4, coupling=1.0, field=1.0, beta=2.0))
        assert rows[1].concurrence_quantum == pytest.approx(reference.report.concurrence)

    def test_coupling_ratio(self):
        cfg = config(trotter_n=[4], sweep={"parameter": "coupling_ratio", "values": [0.25]})
        (row,) = run_sweep(cfg)
        assert row.coupling == 0.25
        assert row.field == 1.0

    def test_beta_grid(self):
        cfg = config(trotter_n=[4], methods=["enum"], sweep={"parameter": "beta", "values": [0.5, 1.0]})
        rows = run_sweep(cfg)
        assert [r.beta for r in rows] == [0.5, 1.0]
        assert all(r.method == "enum" for r in rows)

    def test_field_ratio_needs_coupling(self):
        cfg = validate_config({
            "quantum": {"sites": 4, "coupling": 0.0, "field": 1.0, "beta": 1.0},
            "trotter_n": [4],
            "sweep": {"parameter": "field_ratio", "values": [1.0]},
        })
        with pytest.raises(ConfigError):
            run_sweep(cfg)

    def test_needs_grid(self):
        with pytest.raises(ConfigError):
            run_sweep(config(trotter_n=[4]))


class TestRunPropagate:
    """Tests for run_propagate function."""

    def test_real_time_is_exact(self):
        rows = run_propagate(1.0, 1.0, 1.0, [1, 2, 10])
        assert [r.m for r in rows] == [1, 2, 10]
        for row in rows:
            assert not row.imaginary_time
            assert row.deviation <= 1e-10
            assert row.path_sum_deviation <= 1e-10
            assert row.trace_chain is None

    def test_path_sum_skipped_for_long_chains(self):
        (row,) = run_propagate(1.0, 1.0, 0.5, [20])
        assert row.path_sum_deviation is None
        assert row.deviation <= 1e-10

    def test_imaginary_time_trace(self):
        (row,) = run_propagate(1.0, 1.0, 0.0, [8], beta=1.0)
        assert row.imaginary_time
        assert row.deviation <= 1e-10
        assert row.trace_exact == pytest.approx(2 * math.cosh(math.sqrt(2.0)))
        assert row.trace_chain == pytest.approx(row.trace_exact, rel=1e-10)


@pytest.mark.slow
class TestAcceptanceScale:
    """Larger chains; run with `pytest -m slow`."""

    def test_six_site_chain_at_n64(self):
        cfg = validate_config({
            "quantum": {"sites": 6, "coupling": 1.0, "field": 1.0, "beta": 8.0},
            "trotter_n": [16, 32, 64],
        })
        rows = run_compare(cfg)
        errors = [row.max_abs_error for row in rows]
        assert errors == sorted(errors, reverse=True)
        assert rows[0].convergence_ratio >= 1.6
        assert rows[1].convergence_ratio >= 1.6

        last = rows[-1]
        assert last.max_abs_error <= 2e-2
        assert last.max_abs_error <= last.trotter_err
        assert last.rdm_consistent
        assert last.concurrence_quantum > 0
        assert last.concurrence == pytest.approx(last.concurrence_quantum, abs=2e-2)
        assert last.negativity == pytest.approx(last.negativity_quantum, abs=2e-2)

    def test_six_site_chain_within_5e_3(self):
        cfg = validate_config({
            "quantum": {"sites": 6, "coupling": 1.0, "field": 1.0, "beta": 8.0},
            "trotter_n": [128, 256],
        })
        last = run_compare(cfg)[-1]
        assert last.max_abs_error <= 5e-3
        assert last.rdm_consistent
        assert last.concurrence == pytest.approx(last.concurrence_quantum, abs=5e-3)
        assert last.negativity == pytest.approx(last.negativity_quantum, abs=5e-3)

    @pytest.mark.parametrize("field", [0.5, 1.0, 2.0])
    def test_trotter_convergence(self, field):
        cfg = validate_config({
            "quantum": {"sites": 6, "coupling": 1.0, "field": field, "beta": 8.0},
            "trotter_n": [4, 8, 16, 32, 64],
        })
        rows = run_compare(cfg)
        errors = [row.max_abs_error for row in rows]
        assert errors == sorted(errors, reverse=True)
        for row in rows:
            if 16 <= row.n < 64:
                assert row.convergence_ratio >= 1.6

    @pytest.mark.parametrize("sites", [6, 8])
    @pytest.mark.parametrize("ratio", [0.25, 0.5, 1.0, 2.0, 4.0])
    def test_classical_entanglement_matches_quantum(self, ratio, sites):
        coupling, field = ratio / max(ratio, 1.0), 1.0 / max(ratio, 1.0)
        cfg = validate_config({
            "quantum": {"sites": sites, "coupling": coupling, "field": field, "beta": 20.0},
            "trotter_n": [1024],
        })
        (row,) = run_compare(cfg)
        assert row.rdm_consistent
        assert row.concurrence == pytest.approx(row.concurrence_quantum, abs=5e-3)
        assert row.negativity == pytest.approx(row.negativity_quantum, abs=5e-3)
        if ratio == 1.0:
            assert row.concurrence > 0

    def test_nearest_neighbours_entangled_at_self_dual_point(self):
        spec = QuantumChainSpec(sites=8, coupling=1.0, field=1.0)
        reference = quantum_reference(spec)
        assert reference.report.entangled
        assert reference.report.concurrence > 0
