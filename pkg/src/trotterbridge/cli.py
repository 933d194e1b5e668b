"""Command-line interface for trotterbridge."""

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Iterator, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

from . import __version__
from .config import settings
from .errors import BridgeError
from .experiment import (
    ExperimentConfig,
    Method,
    McModel,
    OutputFormat,
    correlator_record,
    evaluate_lattice,
    lattice_filename,
    load_config,
    load_sampler,
    mc_record,
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
)
from .trotter_map import ClassicalLatticeSpec
from .utils import canonical_json, parse_int_list, write_text

app = typer.Typer(
    name="bridge",
    help="Map quantum spin chains onto classical Ising lattices and compare their correlations.",
    no_args_is_help=True,
)

# stderr for status/debug messages
err_console = Console(stderr=True)
# stdout for program output
out_console = Console()


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        out_console.print(f"trotterbridge {__version__}")
        raise typer.Exit()


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.WARNING)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@contextmanager
def reported_errors() -> Iterator[None]:
    """Turn library errors into a red stderr line and the matching exit code."""
    try:
        yield
    except BridgeError as e:
        err_console.print(f"[red]{escape(str(e))}[/red]")
        raise typer.Exit(e.exit_code)
    except OSError as e:
        err_console.print(f"[red]{escape(f'[bridge_cli] {e}')}[/red]")
        raise typer.Exit(4)


def _int_list(text: Optional[str]) -> Optional[list[int]]:
    if text is None:
        return None
    try:
        return parse_int_list(text)
    except ValueError as e:
        raise typer.BadParameter(str(e))


def _method_list(text: Optional[str]) -> Optional[list[str]]:
    if text is None:
        return None
    return [item.strip() for item in text.split(",") if item.strip()]


def _load(
    config_path: Path,
    n: Optional[str] = None,
    method: Optional[str] = None,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    config = load_config(config_path)
    if n is not None or method is not None or seed is not None:
        config = config.with_overrides(trotter_n=_int_list(n), methods=_method_list(method), seed=seed)
    return config


def _emit(text: str, out: Optional[Path], filename: str) -> None:
    """Write results to out/filename, or to stdout when no directory is given."""
    if out is None:
        out_console.print(text, end="", markup=False, highlight=False, emoji=False, soft_wrap=True)
        return
    path = write_text(Path(out) / filename, text)
    err_console.print(f"[dim]Wrote {path}[/dim]")


def _output_dir(out: Optional[Path], config: Optional[ExperimentConfig]) -> Optional[Path]:
    if out is not None:
        return out
    if config is not None:
        return config.output_dir
    return None


def _read_lattice(path: Path) -> ClassicalLatticeSpec:
    return ClassicalLatticeSpec.from_json(Path(path).read_text(encoding="utf-8"))


ConfigOption = Annotated[
    Optional[Path],
    typer.Option("--config", "-c", help="Experiment config (JSON)"),
]
OutOption = Annotated[
    Optional[Path],
    typer.Option("--out", "-o", help="Output directory (default: config output_dir, else stdout)"),
]
FormatOption = Annotated[
    Optional[OutputFormat],
    typer.Option("--format", "-f", help="Output format (default: config format)"),
]
NOption = Annotated[
    Optional[str],
    typer.Option("--n", help="Trotter numbers, e.g. '8,16,32'"),
]
MethodOption = Annotated[
    Optional[str],
    typer.Option("--method", help="Methods, e.g. 'exact-quantum,transfer-matrix,mc'"),
]
SeedOption = Annotated[
    Optional[int],
    typer.Option("--seed", help="Monte Carlo seed (64-bit)"),
]
LatticeOption = Annotated[
    Optional[Path],
    typer.Option("--lattice", "-l", help="Lattice JSON written by 'bridge map'"),
]


def _require_config(config_path: Optional[Path]) -> Path:
    if config_path is None:
        raise typer.BadParameter("--config is required", param_hint="--config")
    return config_path


@app.command("map")
def map_command(
    config_path: ConfigOption = None,
    out: OutOption = None,
    n: NOption = None,
) -> None:
    """Write the classical lattice of the configured chain for every Trotter number.

    Examples:

        bridge map --config chain.json --n 8,16 --out lattices
    """
    with reported_errors():
        config = _load(_require_config(config_path), n=n)
        directory = _output_dir(out, config) or settings.resolved_data_dir
        for trotter_n, lattice in run_map(config).items():
            path = write_text(Path(directory) / lattice_filename(trotter_n), lattice.to_json())
            err_console.print(f"[dim]n={trotter_n}: {lattice.num_spins} spins[/dim]")
            out_console.print(str(path), markup=False, highlight=False, soft_wrap=True)


@app.command()
def exact(
    config_path: ConfigOption = None,
    out: OutOption = None,
    output_format: FormatOption = None,
) -> None:
    """Exact quantum correlators and entanglement of the configured chain."""
    with reported_errors():
        config = _load(_require_config(config_path))
        fmt = output_format or config.format
        err_console.print(f"[dim]Diagonalising {config.quantum.sites}-site chain...[/dim]")
        record = run_exact(config)
        _emit(render_records("correlators", [record], fmt), _output_dir(out, config), f"exact.{fmt.value}")


@app.command("eval")
def eval_command(
    config_path: ConfigOption = None,
    lattice_path: LatticeOption = None,
    out: OutOption = None,
    output_format: FormatOption = None,
    n: NOption = None,
    method: MethodOption = None,
) -> None:
    """Evaluate lattices exactly (enumeration or transfer matrix).

    Examples:

        bridge eval --config chain.json --method transfer-matrix

        bridge eval --lattice data/lattice_n8.json --method enum
    """
    with reported_errors():
        if lattice_path is not None:
            lattice = _read_lattice(lattice_path)
            try:
                methods = [Method(m) for m in (_method_list(method) or [Method.TRANSFER.value])]
            except ValueError as e:
                raise typer.BadParameter(str(e), param_hint="--method")
            records = []
            for m in methods:
                result = evaluate_lattice(lattice, m)
                records.append(
                    correlator_record(
                        m.value,
                        lattice.rows,
                        result.correlators,
                        result.report,
                        free_energy=result.free_energy,
                        beta=lattice.beta,
                    )
                )
            fmt = output_format or OutputFormat.CSV
            _emit(render_records("correlators", records, fmt), out, f"eval.{fmt.value}")
            return

        config = _load(_require_config(config_path), n=n, method=method)
        fmt = output_format or config.format
        records = run_eval(config)
        _emit(render_records("correlators", records, fmt), _output_dir(out, config), f"eval.{fmt.value}")


@app.command()
def mc(
    config_path: ConfigOption = None,
    lattice_path: LatticeOption = None,
    out: OutOption = None,
    output_format: FormatOption = None,
    n: NOption = None,
    seed: SeedOption = None,
    trace: Annotated[
        bool,
        typer.Option("--trace", help="Also write the per-bin trace (trace.csv)"),
    ] = False,
) -> None:
    """Monte Carlo correlators with jackknife errors.

    With --lattice the sampler settings come from --config, either an
    experiment config (its mc section) or a bare sampler object.

    Examples:

        bridge mc --config chain.json --seed 7 --trace

        bridge mc --lattice data/lattice_n8.json --config sampler.json --trace
    """
    with reported_errors():
        if lattice_path is not None:
            lattice = _read_lattice(lattice_path)
            model = load_sampler(config_path) if config_path is not None else McModel()
            if seed is not None:
                model = model.model_copy(update={"seed": seed})
            sampler = model.to_config()
            err_console.print(f"[dim]Sampling {sampler.chains} chain(s) x {sampler.sweeps} sweeps...[/dim]")
            result = evaluate_lattice(lattice, Method.MC, mc=sampler)
            records = [mc_record(lattice.rows, lattice, result)]
            trace_records = trace_rows(lattice.rows, result.estimates)
            directory = out
            fmt = output_format or OutputFormat.CSV
        else:
            config = _load(_require_config(config_path), n=n, seed=seed)
            if config.mc is None:
                config = config.with_overrides(
                    methods=[m.value for m in config.methods] + [Method.MC.value], seed=seed
                )
            err_console.print(
                f"[dim]Sampling {config.mc.chains} chain(s) x {config.mc.sweeps} sweeps "
                f"on {settings.workers} worker(s)...[/dim]"
            )
            records, trace_records = run_mc(config)
            directory = _output_dir(out, config)
            fmt = output_format or config.format

        _emit(render_records("correlators", records, fmt), directory, f"mc.{fmt.value}")
        if trace:
            _emit(
                render_records("trace", trace_records, OutputFormat.CSV),
                directory or settings.resolved_data_dir,
                "trace.csv",
            )


@app.command()
def compare(
    config_path: ConfigOption = None,
    out: OutOption = None,
    output_format: FormatOption = None,
    n: NOption = None,
    method: MethodOption = None,
    seed: SeedOption = None,
) -> None:
    """Compare classical lattice correlators with the exact quantum ones.

    Examples:

        bridge compare --config chain.json --n 4,8,16,32,64 --format csv
    """
    with reported_errors():
        config = _load(_require_config(config_path), n=n, method=method, seed=seed)
        fmt = output_format or config.format
        rows = run_compare(config)
        _emit(render_records("compare", rows, fmt), _output_dir(out, config), f"compare.{fmt.value}")


@app.command()
def sweep(
    config_path: ConfigOption = None,
    out: OutOption = None,
    output_format: FormatOption = None,
    n: NOption = None,
    method: MethodOption = None,
    seed: SeedOption = None,
) -> None:
    """Entanglement from both routes over the config's parameter grid."""
    with reported_errors():
        config = _load(_require_config(config_path), n=n, method=method, seed=seed)
        fmt = output_format or config.format
        rows = run_sweep(config)
        _emit(render_records("sweep", rows, fmt), _output_dir(out, config), f"sweep.{fmt.value}")


@app.command()
def propagate(
    energy: Annotated[float, typer.Option("--energy", "-E", help="E in H = E sz + D sx")] = 1.0,
    tunnelling: Annotated[float, typer.Option("--tunnelling", "-D", help="D in H = E sz + D sx")] = 1.0,
    time: Annotated[float, typer.Option("--time", "-t", help="Evolution time t")] = 1.0,
    slices: Annotated[str, typer.Option("--m", help="Slice counts, e.g. '1,2,10'")] = "1,2,10",
    beta: Annotated[
        Optional[float],
        typer.Option("--beta", help="Continue it -> beta and check the thermal trace"),
    ] = None,
    out: OutOption = None,
    output_format: FormatOption = None,
) -> None:
    """Check a single qubit's propagator against its classical chain."""
    with reported_errors():
        rows = run_propagate(energy, tunnelling, time, _int_list(slices), beta)
        fmt = output_format or OutputFormat.CSV
        _emit(render_records("propagate", rows, fmt), out, f"propagate.{fmt.value}")


@app.command()
def schema(out: OutOption = None) -> None:
    """Print the versioned JSON schema of every output record."""
    _emit(canonical_json(record_schema()), out, "schema.json")


@app.callback()
def main(
    version: Annotated[
        bool,
        typer.Option("--version", callback=version_callback, is_eager=True),
    ] = False,
    verbose: Annotated[
        bool,
        typer.Option("--verbose", "-v", help="Debug logging on stderr"),
    ] = False,
    workers: Annotated[
        Optional[int],
        typer.Option("--workers", help="Processes for Monte Carlo chains (default: BRIDGE_WORKERS)"),
    ] = None,
) -> None:
    """bridge - quantum spin chains as classical Ising lattices."""
    setup_logging(verbose)
    if workers is not None:
        settings.workers = max(1, workers)


if __name__ == "__main__":
    app()
