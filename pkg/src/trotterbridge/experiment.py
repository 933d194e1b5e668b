"""Experiment configs and the pipelines behind the CLI.

map -> evaluate -> reconstruct -> compare. Every record type is a pydantic
model carrying schema_version, so output files can be checked against the
JSON schema printed by `bridge schema`.
"""

import json
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy.linalg import expm

from .entanglement import EntanglementReport, InconsistentCorrelatorsError, entanglement_report
from .errors import BridgeIOError, BridgeValidationError
from .lattice_eval import EvalMethod, classical_correlators, free_energy as lattice_free_energy
from .mc_sampler import Estimate, McConfig, estimate_correlators
from .spinchain_exact import (
    Boundary,
    CorrelatorSet,
    QuantumChainSpec,
    build_tfim,
    correlators,
    free_energy as quantum_free_energy,
    thermal_state,
)
from .trotter_map import (
    ClassicalLatticeSpec,
    classical_chain_sum,
    map_tfim,
    qubit_chain_propagator,
    qubit_hamiltonian,
    solve_transfer_element,
)
from .utils import canonical_json, render_csv

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CORRELATOR_NAMES = ("m_x", "c_x", "c_y", "c_z")
PATH_SUM_SLICES = 12


class ExperimentError(Exception):
    """Marker base for pipeline errors."""

    module = "bridge_cli"


class ConfigError(ExperimentError, BridgeValidationError):
    """Experiment config is invalid."""


class ConfigFileError(ExperimentError, BridgeIOError):
    """Experiment config could not be read."""


class Method(str, Enum):
    EXACT_QUANTUM = "exact-quantum"
    ENUM = "enum"
    TRANSFER = "transfer-matrix"
    MC = "mc"

    @property
    def is_classical(self) -> bool:
        return self is not Method.EXACT_QUANTUM


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class QuantumModel(BaseModel):
    """Chain parameters; J and B in energy units, beta in inverse energy (hbar = k_B = 1)."""

    model_config = ConfigDict(extra="forbid")

    sites: int
    coupling: float
    field: float
    boundary: Boundary = Boundary.PERIODIC
    beta: float | None = None

    @model_validator(mode="after")
    def check_chain(self) -> "QuantumModel":
        self.to_spec()
        return self

    def to_spec(self) -> QuantumChainSpec:
        return QuantumChainSpec(
            sites=self.sites,
            coupling=self.coupling,
            field=self.field,
            boundary=self.boundary,
            beta=self.beta,
        )


class McModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    chains: int = 4
    sweeps: int = 10_000
    burn_in: int | None = None
    bins: int = 32

    @model_validator(mode="after")
    def check_sampler(self) -> "McModel":
        self.to_config()
        return self

    def to_config(self) -> McConfig:
        return McConfig(
            seed=self.seed, chains=self.chains, sweeps=self.sweeps, burn_in=self.burn_in, bins=self.bins
        )


class SweepGrid(BaseModel):
    """Grid over B/J (field_ratio), J/B (coupling_ratio) or beta."""

    model_config = ConfigDict(extra="forbid")

    parameter: Literal["field_ratio", "coupling_ratio", "beta"]
    values: list[float] = Field(min_length=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    quantum: QuantumModel
    trotter_n: list[int] = Field(default_factory=lambda: [8, 16, 32, 64])
    methods: list[Method] = Field(default_factory=lambda: [Method.EXACT_QUANTUM, Method.TRANSFER])
    mc: McModel | None = None
    output_dir: Path | None = None
    format: OutputFormat = OutputFormat.CSV
    site: int = 0
    sweep: SweepGrid | None = None
    include_runtime: bool = False

    @field_validator("trotter_n")
    @classmethod
    def check_trotter_n(cls, value: list[int]) -> list[int]:
        if not value:
            raise ValueError("trotter_n must not be empty")
        if any(n < 1 for n in value):
            raise ValueError(f"Trotter numbers must be positive, got {value}")
        if value != sorted(set(value)):
            raise ValueError(f"trotter_n must be strictly ascending, got {value}")
        return value

    @field_validator("methods")
    @classmethod
    def check_methods(cls, value: list[Method]) -> list[Method]:
        if not value:
            raise ValueError("methods must not be empty")
        if len(set(value)) != len(value):
            raise ValueError(f"Duplicate methods in {[m.value for m in value]}")
        return value

    @model_validator(mode="after")
    def check_mc(self) -> "ExperimentConfig":
        if (Method.MC in self.methods) != (self.mc is not None):
            raise ValueError("An mc section is required exactly when methods include mc")
        return self

    @property
    def classical_methods(self) -> list[Method]:
        return [m for m in self.methods if m.is_classical]

    def with_overrides(
        self,
        trotter_n: list[int] | None = None,
        methods: list[str] | None = None,
        seed: int | None = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides and validate the result.

        Adding mc without an mc section uses the sampler defaults; dropping mc
        drops the section.
        """
        data = self.model_dump()
        if trotter_n is not None:
            data["trotter_n"] = trotter_n
        if methods is not None:
            data["methods"] = methods
            if Method.MC.value in methods and data["mc"] is None:
                data["mc"] = McModel().model_dump()
            if Method.MC.value not in methods:
                data["mc"] = None
        if seed is not None and data["mc"] is not None:
            data["mc"]["seed"] = seed
        return validate_config(data)


def _problems(e: ValidationError) -> str:
    return "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())


def validate_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a config document.

    Raises:
        ConfigError: On any schema or invariant violation.
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {_problems(e)}")


def _read_json(path: Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigFileError(f"Cannot read config {path}: {e}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}")


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate a JSON experiment config.

    Raises:
        ConfigFileError: If the file cannot be read.
        ConfigError: If the JSON or the config is invalid.
    """
    return validate_config(_read_json(path))


def load_sampler(path: Path) -> McModel:
    """Sampler settings from a JSON file.

    The file is either a full experiment config, whose mc section is used
    (sampler defaults when it has none), or a bare sampler object such as
    {"seed": 7, "sweeps": 2000}.

    Raises:
        ConfigFileError: If the file cannot be read.
        ConfigError: If the JSON or the settings are invalid.
    """
    data = _read_json(path)
    if isinstance(data, dict) and "quantum" in data:
        return validate_config(data).mc or McModel()
    try:
        return McModel.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid sampler settings in {path}: {_problems(e)}")


# Records


class Record(BaseModel):
    schema_version: int = SCHEMA_VERSION


class CorrelatorRecord(Record):
    method: str
    n: int | None = None
    site: int
    m_x: float
    m_x_next: float
    c_x: float
    c_y: float
    c_z: float
    m_x_err: float = 0.0
    c_x_err: float = 0.0
    c_y_err: float = 0.0
    c_z_err: float = 0.0
    trotter_err: float = 0.0
    log_partition: float | None = None
    free_energy: float | None = None
    beta: float | None = None
    concurrence: float | None = None
    negativity: float | None = None
    entangled: bool | None = None
    repair_applied: bool | None = None
    acceptance: float | None = None
    autocorrelation_hint: float | None = None


class ComparisonRow(Record):
    """One classical method at one Trotter number against the quantum oracle."""

    method: str
    n: int
    site: int
    m_x: float
    m_x_err: float
    m_x_quantum: float
    m_x_abs_error: float = Field(ge=0)
    c_x: float
    c_x_err: float
    c_x_quantum: float
    c_x_abs_error: float = Field(ge=0)
    c_y: float
    c_y_err: float
    c_y_quantum: float
    c_y_abs_error: float = Field(ge=0)
    c_z: float
    c_z_err: float
    c_z_quantum: float
    c_z_abs_error: float = Field(ge=0)
    max_abs_error: float = Field(ge=0)
    trotter_err: float = Field(default=0.0, ge=0)
    convergence_ratio: float | None = None
    free_energy: float | None = None
    free_energy_quantum: float
    concurrence: float | None = None
    concurrence_err: float | None = None
    concurrence_quantum: float
    negativity: float | None = None
    negativity_err: float | None = None
    negativity_quantum: float
    repair_applied: bool | None = None
    rdm_consistent: bool
    runtime_ms: float | None = None


class SweepRow(Record):
    parameter: str
    value: float
    coupling: float
    field: float
    beta: float
    method: str
    n: int
    concurrence_quantum: float
    negativity_quantum: float
    entangled_quantum: bool
    concurrence_classical: float | None = None
    concurrence_classical_err: float | None = None
    negativity_classical: float | None = None
    negativity_classical_err: float | None = None
    entangled_classical: bool | None = None
    repair_applied: bool | None = None
    rdm_consistent: bool


class PropagateRow(Record):
    m: int
    imaginary_time: bool
    deviation: float
    path_sum_deviation: float | None = None
    trace_chain: float | None = None
    trace_exact: float | None = None


class TraceRow(Record):
    observable: str
    chain: int
    bin: int
    value: float


RECORD_MODELS: dict[str, type[Record]] = {
    "correlators": CorrelatorRecord,
    "compare": ComparisonRow,
    "sweep": SweepRow,
    "propagate": PropagateRow,
    "trace": TraceRow,
}


def record_schema() -> dict[str, Any]:
    """Versioned JSON schema of every record type."""
    return {
        "schema_version": SCHEMA_VERSION,
        "records": {name: model.model_json_schema() for name, model in RECORD_MODELS.items()},
    }


def render_records(kind: str, rows: list[Record], fmt: OutputFormat | str) -> str:
    """CSV (one row per record) or JSON ({schema_version, kind, rows}) text."""
    fmt = OutputFormat(fmt)
    dumped = [row.model_dump(mode="json") for row in rows]
    if fmt is OutputFormat.JSON:
        return canonical_json({"schema_version": SCHEMA_VERSION, "kind": kind, "rows": dumped})
    columns = list(RECORD_MODELS[kind].model_fields)
    return render_csv(dumped, columns)


# Pipelines


@dataclass
class QuantumReference:
    spec: QuantumChainSpec
    correlators: CorrelatorSet
    report: EntanglementReport
    free_energy: float


@dataclass
class ClassicalResult:
    correlators: CorrelatorSet
    report: EntanglementReport | None
    free_energy: float | None = None
    log_partition: float | None = None
    estimates: dict[str, Estimate] | None = None


def quantum_reference(spec: QuantumChainSpec, site: int = 0) -> QuantumReference:
    """Exact thermal correlators, measures and free energy of the chain."""
    H = build_tfim(spec)
    state = thermal_state(H, spec.beta)
    exact = correlators(state, site)
    return QuantumReference(
        spec=spec,
        correlators=exact,
        report=entanglement_report(exact),
        free_energy=quantum_free_energy(H, spec.beta),
    )


def _report_or_none(c: CorrelatorSet) -> EntanglementReport | None:
    try:
        return entanglement_report(c)
    except InconsistentCorrelatorsError as e:
        logger.warning("%s", e)
        return None


def evaluate_lattice(
    lattice: ClassicalLatticeSpec, method: Method, site: int = 0, mc: McConfig | None = None
) -> ClassicalResult:
    """Correlators and measures of one lattice by one classical method."""
    if method is Method.MC:
        if mc is None:
            raise ConfigError("Monte Carlo evaluation needs sampler settings")
        corr, estimates = estimate_correlators(lattice, mc, site)
        return ClassicalResult(correlators=corr, report=_report_or_none(corr), estimates=estimates)
    if method is Method.EXACT_QUANTUM:
        raise ConfigError("exact-quantum is not a lattice method")

    eval_method = EvalMethod(method.value)
    corr = classical_correlators(lattice, site, eval_method, with_trotter_error=True)
    energy = lattice_free_energy(lattice, eval_method) if lattice.beta is not None else None
    return ClassicalResult(correlators=corr, report=_report_or_none(corr), free_energy=energy)


def run_map(config: ExperimentConfig) -> dict[int, ClassicalLatticeSpec]:
    """One mapped lattice per Trotter number."""
    spec = config.quantum.to_spec()
    return {n: map_tfim(spec, n) for n in config.trotter_n}


def lattice_filename(n: int) -> str:
    return f"lattice_n{n}.json"


def run_exact(config: ExperimentConfig) -> CorrelatorRecord:
    reference = quantum_reference(config.quantum.to_spec(), config.site)
    return correlator_record(
        Method.EXACT_QUANTUM.value,
        None,
        reference.correlators,
        reference.report,
        free_energy=reference.free_energy,
        beta=reference.spec.beta,
    )


def correlator_record(
    method: str,
    n: int | None,
    c: CorrelatorSet,
    report: EntanglementReport | None,
    **extra: Any,
) -> CorrelatorRecord:
    errors = dict(zip((f"{name}_err" for name in CORRELATOR_NAMES), c.std_err))
    errors["trotter_err"] = max(c.trotter_err)
    measures = {}
    if report is not None:
        measures = {
            "concurrence": report.concurrence,
            "negativity": report.negativity,
            "entangled": report.entangled,
            "repair_applied": report.repair_applied,
        }
    return CorrelatorRecord(method=method, n=n, site=c.site, **c.values(), **errors, **measures, **extra)


def run_eval(config: ExperimentConfig) -> list[CorrelatorRecord]:
    """Exact lattice correlators for every (classical method, n)."""
    lattices = run_map(config)
    records = []
    for method in config.classical_methods:
        if method is Method.MC:
            continue
        for n, lattice in lattices.items():
            result = evaluate_lattice(lattice, method, config.site)
            records.append(
                correlator_record(
                    method.value,
                    n,
                    result.correlators,
                    result.report,
                    free_energy=result.free_energy,
                    beta=lattice.beta,
                )
            )
    return records


def mc_record(n: int, lattice: ClassicalLatticeSpec, result: ClassicalResult) -> CorrelatorRecord:
    estimates = result.estimates
    return correlator_record(
        Method.MC.value,
        n,
        result.correlators,
        result.report,
        beta=lattice.beta,
        acceptance=estimates["m_x"].acceptance,
        autocorrelation_hint=max(e.autocorrelation_hint for e in estimates.values()),
    )


def trace_rows(n: int, estimates: dict[str, Estimate]) -> list[TraceRow]:
    """Per-bin means of every estimator, labelled n<N>:<observable>."""
    return [
        TraceRow(observable=f"n{n}:{name}", **row) for name, est in estimates.items() for row in est.trace_rows()
    ]


def run_mc(config: ExperimentConfig) -> tuple[list[CorrelatorRecord], list[TraceRow]]:
    """Monte Carlo correlators for every n, plus the per-bin trace."""
    mc = (config.mc or McModel()).to_config()
    records, trace = [], []
    for n, lattice in run_map(config).items():
        result = evaluate_lattice(lattice, Method.MC, config.site, mc)
        records.append(mc_record(n, lattice, result))
        trace.extend(trace_rows(n, result.estimates))
    return records, trace


def _comparison_row(
    method: Method,
    n: int,
    reference: QuantumReference,
    result: ClassicalResult,
    runtime_ms: float | None,
) -> ComparisonRow:
    classical = result.correlators
    quantum = reference.correlators.values()
    fields: dict[str, Any] = {}
    for index, name in enumerate(CORRELATOR_NAMES):
        value = classical.values()[name]
        fields[name] = value
        fields[f"{name}_err"] = classical.std_err[index]
        fields[f"{name}_quantum"] = quantum[name]
        fields[f"{name}_abs_error"] = abs(value - quantum[name])

    report = result.report
    return ComparisonRow(
        method=method.value,
        n=n,
        site=classical.site,
        **fields,
        max_abs_error=max(fields[f"{name}_abs_error"] for name in CORRELATOR_NAMES),
        trotter_err=max(classical.trotter_err),
        free_energy=result.free_energy,
        free_energy_quantum=reference.free_energy,
        concurrence=None if report is None else report.concurrence,
        concurrence_err=None if report is None else report.concurrence_err,
        concurrence_quantum=reference.report.concurrence,
        negativity=None if report is None else report.negativity,
        negativity_err=None if report is None else report.negativity_err,
        negativity_quantum=reference.report.negativity,
        repair_applied=None if report is None else report.repair_applied,
        rdm_consistent=report is not None,
        runtime_ms=runtime_ms,
    )


def _with_convergence_ratios(rows: list[ComparisonRow]) -> list[ComparisonRow]:
    errors = {(row.method, row.n): row.max_abs_error for row in rows}
    updated = []
    for row in rows:
        doubled = errors.get((row.method, 2 * row.n))
        ratio = None
        if doubled is not None and doubled > 0:
            ratio = row.max_abs_error / doubled
        updated.append(row.model_copy(update={"convergence_ratio": ratio}))
    return updated


def run_compare(config: ExperimentConfig) -> list[ComparisonRow]:
    """ComparisonRows keyed by (method, n), in config order.

    convergence_ratio is err(n) / err(2n) of the largest correlator error,
    empty when 2n is not in the list.

    Raises:
        ConfigError: Unless methods hold exact-quantum and a classical method.
    """
    if Method.EXACT_QUANTUM not in config.methods or not config.classical_methods:
        raise ConfigError("compare needs exact-quantum and at least one classical method")

    reference = quantum_reference(config.quantum.to_spec(), config.site)
    lattices = run_map(config)
    mc = config.mc.to_config() if config.mc is not None else None

    rows = []
    for method in config.classical_methods:
        for n, lattice in lattices.items():
            started = time.perf_counter()
            result = evaluate_lattice(lattice, method, config.site, mc)
            elapsed = (time.perf_counter() - started) * 1000 if config.include_runtime else None
            rows.append(_comparison_row(method, n, reference, result, elapsed))
            logger.info("%s n=%d: max error %.3g", method.value, n, rows[-1].max_abs_error)
    return _with_convergence_ratios(rows)


def _grid_spec(base: QuantumModel, parameter: str, value: float) -> QuantumChainSpec:
    data = base.model_dump()
    if parameter == "field_ratio":
        if base.coupling == 0:
            raise ConfigError("A field_ratio sweep needs J != 0")
        data["field"] = value * base.coupling
    elif parameter == "coupling_ratio":
        data["coupling"] = value * base.field
    else:
        data["beta"] = value
    return QuantumModel(**data).to_spec()


def run_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Both routes to the measures at every grid point, at the largest Trotter number."""
    if config.sweep is None:
        raise ConfigError("sweep needs a sweep section with a parameter grid")
    if not config.classical_methods:
        raise ConfigError("sweep needs at least one classical method")

    n = config.trotter_n[-1]
    mc = config.mc.to_config() if config.mc is not None else None
    rows = []
    for value in config.sweep.values:
        spec = _grid_spec(config.quantum, config.sweep.parameter, value)
        reference = quantum_reference(spec, config.site)
        lattice = map_tfim(spec, n)
        for method in config.classical_methods:
            result = evaluate_lattice(lattice, method, config.site, mc)
            report = result.report
            rows.append(
                SweepRow(
                    parameter=config.sweep.parameter,
                    value=value,
                    coupling=spec.coupling,
                    field=spec.field,
                    beta=spec.beta,
                    method=method.value,
                    n=n,
                    concurrence_quantum=reference.report.concurrence,
                    negativity_quantum=reference.report.negativity,
                    entangled_quantum=reference.report.entangled,
                    concurrence_classical=None if report is None else report.concurrence,
                    concurrence_classical_err=None if report is None else report.concurrence_err,
                    negativity_classical=None if report is None else report.negativity,
                    negativity_classical_err=None if report is None else report.negativity_err,
                    entangled_classical=None if report is None else report.entangled,
                    repair_applied=None if report is None else report.repair_applied,
                    rdm_consistent=report is not None,
                )
            )
    return rows


def run_propagate(
    energy: float,
    tunnelling: float,
    time_: float,
    slices: list[int],
    beta: float | None = None,
) -> list[PropagateRow]:
    """Deviation of the contracted classical chain from the direct 2x2 exponential.

    With beta set the chain is continued to imaginary time and also checked
    against the two-level Boltzmann sum tr e^{-beta H}.

    Raises:
        SingularMappingError: If the tunnelling D is 0.
    """
    H = qubit_hamiltonian(energy, tunnelling)
    imaginary = beta is not None
    target = expm(-beta * H) if imaginary else expm(-1j * time_ * H)
    duration = beta if imaginary else time_
    omega = math.hypot(energy, tunnelling)

    rows = []
    for m in slices:
        chain = qubit_chain_propagator(energy, tunnelling, duration, m, imaginary_time=imaginary)
        deviation = float(np.max(np.abs(chain - target)))

        path_deviation = None
        if m <= PATH_SUM_SLICES:
            epsilon = duration / m if imaginary else 1j * duration / m
            constants = solve_transfer_element(energy, tunnelling, epsilon)
            spins = (1, -1)
            path_deviation = max(
                abs(classical_chain_sum(constants, m, first, last) - target[spins.index(last), spins.index(first)])
                for first in spins
                for last in spins
            )

        rows.append(
            PropagateRow(
                m=m,
                imaginary_time=imaginary,
                deviation=deviation,
                path_sum_deviation=path_deviation,
                trace_chain=float(np.trace(chain).real) if imaginary else None,
                trace_exact=2 * math.cosh(beta * omega) if imaginary else None,
            )
        )
    return rows
