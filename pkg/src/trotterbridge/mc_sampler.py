"""Metropolis Monte Carlo on classical Ising lattices.

Single-spin sampling of exp(sum of bond energies) with heat-bath acceptance,
slice-averaged insertion estimators, binning and a jackknife over bins.
Every chain owns a Philox stream seeded with seed + chain index, so results
are bit-reproducible for a given seed whatever the worker count.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .config import settings
from .errors import BridgeNumericError, BridgeValidationError
from .lattice_eval import SpinConfiguration, correlator_observables
from .spinchain_exact import Boundary, CorrelatorSet, Provenance
from .trotter_map import ClassicalLatticeSpec, InsertionKind, InsertionSpec, InvalidLatticeError, insertion_for

logger = logging.getLogger(__name__)

SEED_MODULUS = 1 << 64
MIN_BINS = 8


class McSamplerError(Exception):
    """Marker base for Monte Carlo errors."""

    module = "mc_sampler"


class McConfigError(McSamplerError, BridgeValidationError):
    """Invalid sampler configuration."""


class SignProblemError(McSamplerError, BridgeValidationError):
    """Complex couplings give complex weights that cannot be sampled."""


class EstimatorBoundError(McSamplerError, BridgeNumericError):
    """An estimator sample exceeded its analytic bound."""


@dataclass(frozen=True)
class McConfig:
    """Sampler settings.

    burn_in defaults to 20% of sweeps. Each chain measures once per sweep
    after burn-in and splits its measurements into `bins` equal bins.
    """

    seed: int = 0
    chains: int = 4
    sweeps: int = 10_000
    burn_in: int | None = None
    bins: int = 32

    def __post_init__(self) -> None:
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", max(1, self.sweeps // 5))
        if not -(1 << 63) <= self.seed < SEED_MODULUS:
            raise McConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.chains < 1 or self.sweeps < 1 or self.burn_in < 1:
            raise McConfigError("chains, sweeps and burn_in must be positive")
        if self.sweeps <= self.burn_in:
            raise McConfigError(f"sweeps ({self.sweeps}) must exceed burn_in ({self.burn_in})")
        if self.bins < MIN_BINS:
            raise McConfigError(f"At least {MIN_BINS} bins are needed for a jackknife, got {self.bins}")
        if self.measured_sweeps < self.bins:
            raise McConfigError(
                f"{self.measured_sweeps} measured sweeps cannot fill {self.bins} bins"
            )

    @property
    def measured_sweeps(self) -> int:
        return self.sweeps - self.burn_in

    @property
    def bin_size(self) -> int:
        return self.measured_sweeps // self.bins

    def chain_seed(self, chain: int) -> int:
        return (self.seed + chain) % SEED_MODULUS


@dataclass
class SweepStats:
    """Accepted and proposed single-spin moves."""

    proposed: int = 0
    accepted: int = 0

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def merge(self, other: "SweepStats") -> "SweepStats":
        return SweepStats(self.proposed + other.proposed, self.accepted + other.accepted)


@dataclass(frozen=True, eq=False)
class Estimate:
    """Binned Monte Carlo mean with a jackknife error.

    autocorrelation_hint is the ratio of the binned to the naive variance of
    the mean, roughly twice the integrated autocorrelation time in sweeps.
    """

    mean: float
    std_err: float
    n_samples: int
    autocorrelation_hint: float
    max_abs_sample: float = 0.0
    acceptance: float = 0.0
    bin_means: np.ndarray | None = field(default=None, repr=False)

    def trace_rows(self) -> list[dict]:
        """Per-bin rows (chain, bin, value) for external diagnostics."""
        if self.bin_means is None:
            return []
        return [
            {"chain": chain, "bin": index, "value": float(value)}
            for chain, means in enumerate(self.bin_means)
            for index, value in enumerate(means)
        ]


def jackknife(
    samples: np.ndarray, statistic: Callable[[np.ndarray], float] = np.mean
) -> tuple[float, float]:
    """Leave-one-out jackknife over the first axis.

    Args:
        samples: One entry per bin.
        statistic: Function of the kept bins.

    Returns:
        (statistic of all bins, jackknife standard error).
    """
    samples = np.asarray(samples, dtype=float)
    count = len(samples)
    if count < 2:
        raise McConfigError("Jackknife needs at least two bins")

    full = float(statistic(samples))
    leave_one_out = np.array([statistic(np.delete(samples, i, axis=0)) for i in range(count)])
    variance = (count - 1) / count * np.sum((leave_one_out - leave_one_out.mean()) ** 2)
    return full, float(math.sqrt(variance))


def estimator_bound(insertions: list[InsertionSpec]) -> float:
    """Largest possible |product of insertion factors| for any configuration."""
    bound = 1.0
    for ins in insertions:
        bound *= abs(ins.coefficient)
        if ins.kind is not InsertionKind.Z:
            bound *= math.exp(abs(ins.strength))
    return bound


def _colours(size: int, periodic: bool) -> np.ndarray:
    """Two-colouring of a line, with a third colour closing odd rings."""
    colours = np.arange(size) % 2
    if periodic and size % 2 == 1 and size > 1:
        colours[-1] = 2
    return colours


class _Sweeper:
    """Vectorised heat-bath updates over colour classes of non-interacting spins."""

    def __init__(self, lattice: ClassicalLatticeSpec):
        if not lattice.is_real:
            raise SignProblemError("Complex couplings have complex Boltzmann weights; Monte Carlo needs real ones")

        self.lattice = lattice
        self.spatial = float(np.real(lattice.spatial_coupling))
        self.temporal = float(np.real(lattice.temporal_coupling))
        M, n = lattice.columns, lattice.rows
        periodic = lattice.boundary_space is Boundary.PERIODIC

        # self-bonds (M = 1 ring, n = 1) only add a constant
        self.use_spatial = M > 1
        self.use_temporal = n > 1

        self.left_mask = np.ones(M)
        self.right_mask = np.ones(M)
        if not periodic:
            self.left_mask[0] = 0.0
            self.right_mask[-1] = 0.0

        column_colour = _colours(M, periodic)
        row_colour = _colours(n, True)
        classes = column_colour[None, :] + 3 * row_colour[:, None]
        self.masks = [classes == c for c in np.unique(classes)]

    def field(self, spins: np.ndarray) -> np.ndarray:
        h = np.zeros_like(spins)
        if self.use_spatial:
            left = np.roll(spins, 1, axis=1) * self.left_mask
            right = np.roll(spins, -1, axis=1) * self.right_mask
            h += self.spatial * (left + right)
        if self.use_temporal:
            h += self.temporal * (np.roll(spins, 1, axis=0) + np.roll(spins, -1, axis=0))
        return h

    def sweep(self, spins: np.ndarray, rng: np.random.Generator, stats: SweepStats) -> None:
        for mask in self.masks:
            h = self.field(spins)[mask]
            current = spins[mask]
            accept = rng.random(current.size) < flip_probability(-2.0 * current * h)
            current[accept] *= -1
            spins[mask] = current
            stats.proposed += current.size
            stats.accepted += int(accept.sum())


def flip_probability(delta: np.ndarray) -> np.ndarray:
    """Heat-bath probability of a flip that changes the log weight by delta.

    Always strictly between 0 and 1 for finite delta, so a flip with delta = 0
    happens with probability 1/2 rather than with certainty.
    """
    return expit(delta)


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _random_spins(rows: int, columns: int, rng: np.random.Generator) -> np.ndarray:
    return np.where(rng.random((rows, columns)) < 0.5, 1.0, -1.0)


def metropolis_sweep(
    config: SpinConfiguration,
    lattice: ClassicalLatticeSpec,
    rng: np.random.Generator,
    stats: SweepStats | None = None,
) -> SpinConfiguration:
    """One full pass of single-spin updates with heat-bath acceptance.

    Spins are visited colour class by colour class; spins in a class share
    no bond, so each class update is a product of independent single-spin
    heat-bath steps and keeps the Boltzmann weights stationary.

    Raises:
        SignProblemError: If a coupling is complex.
    """
    if config.spins.shape != (lattice.rows, lattice.columns):
        raise InvalidLatticeError(
            f"Configuration shape {config.spins.shape} does not match lattice "
            f"({lattice.rows}, {lattice.columns})"
        )
    spins = config.spins.astype(float)
    _Sweeper(lattice).sweep(spins, rng, stats if stats is not None else SweepStats())
    return SpinConfiguration(spins.astype(np.int8))


def slice_averaged(spins: np.ndarray, lattice: ClassicalLatticeSpec, insertions: list[InsertionSpec]) -> np.ndarray:
    """Insertion product for every cyclic slice shift of one configuration.

    Entry l is the product with all insertions moved l slices forward.
    """
    n = lattice.rows
    weight = np.ones(n)
    for ins in insertions:
        column = spins[:, ins.site]
        here = np.roll(column, -ins.slice)
        after = np.roll(column, -((ins.slice + 1) % n))
        if ins.kind is InsertionKind.Z:
            weight = weight * here
        elif ins.kind is InsertionKind.XBOND:
            weight = weight * np.exp(-ins.strength * here * after)
        else:
            weight = weight * np.exp(-ins.strength * here * after) * after
        weight = weight * ins.coefficient
    return weight


@dataclass
class _ChainResult:
    samples: np.ndarray  # (observables, measured sweeps)
    max_abs: np.ndarray
    stats: SweepStats


def _run_chain(
    lattice: ClassicalLatticeSpec, observables: list[list[InsertionSpec]], mc: McConfig, chain: int
) -> _ChainResult:
    rng = _generator(mc.chain_seed(chain))
    sweeper = _Sweeper(lattice)
    spins = _random_spins(lattice.rows, lattice.columns, rng)
    stats = SweepStats()

    for _ in range(mc.burn_in):
        sweeper.sweep(spins, rng, stats)

    samples = np.empty((len(observables), mc.measured_sweeps))
    max_abs = np.zeros(len(observables))
    for t in range(mc.measured_sweeps):
        sweeper.sweep(spins, rng, stats)
        for o, insertions in enumerate(observables):
            per_slice = slice_averaged(spins, lattice, insertions)
            samples[o, t] = per_slice.mean()
            max_abs[o] = max(max_abs[o], float(np.abs(per_slice).max()))

    logger.debug("Chain %d done: acceptance %.3f", chain, stats.acceptance)
    return _ChainResult(samples, max_abs, stats)


def _run_chains(
    lattice: ClassicalLatticeSpec, observables: list[list[InsertionSpec]], mc: McConfig
) -> list[_ChainResult]:
    chains = range(mc.chains)
    workers = min(settings.workers, mc.chains)
    if workers <= 1:
        return [_run_chain(lattice, observables, mc, chain) for chain in chains]

    logger.debug("Running %d chains on %d workers", mc.chains, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps chain order, so the merge below is deterministic
        return list(
            pool.map(
                _run_chain,
                [lattice] * mc.chains,
                [observables] * mc.chains,
                [mc] * mc.chains,
                chains,
            )
        )


def _summarise(
    samples: list[np.ndarray], max_abs: float, mc: McConfig, acceptance: float
) -> Estimate:
    size = mc.bin_size
    used = size * mc.bins
    bin_means = np.array([chain[:used].reshape(mc.bins, size).mean(axis=1) for chain in samples])
    flat = bin_means.reshape(-1)
    mean, std_err = jackknife(flat)

    pooled = np.concatenate([chain[:used] for chain in samples])
    naive = pooled.var() / len(pooled)
    hint = std_err**2 / naive if naive > 0 else 1.0

    return Estimate(
        mean=mean,
        std_err=std_err,
        n_samples=len(pooled),
        autocorrelation_hint=float(hint),
        max_abs_sample=float(max_abs),
        acceptance=acceptance,
        bin_means=bin_means,
    )


def estimate_many(
    lattice: ClassicalLatticeSpec, observables: dict[str, list[InsertionSpec]], mc: McConfig
) -> dict[str, Estimate]:
    """Estimate several insertion products from the same chains.

    Raises:
        SignProblemError: If a coupling is complex.
        EstimatorBoundError: If a sample exceeds its analytic bound.
    """
    if not lattice.is_real:
        raise SignProblemError("Complex couplings have complex Boltzmann weights; Monte Carlo needs real ones")

    names = list(observables)
    insertion_lists = [observables[name] for name in names]
    results = _run_chains(lattice, insertion_lists, mc)

    stats = SweepStats()
    for result in results:
        stats = stats.merge(result.stats)

    estimates = {}
    for o, name in enumerate(names):
        max_abs = max(float(result.max_abs[o]) for result in results)
        bound = estimator_bound(insertion_lists[o])
        if max_abs > bound * (1 + 1e-12):
            raise EstimatorBoundError(f"{name}: sample {max_abs} exceeds bound {bound}")
        estimates[name] = _summarise([result.samples[o] for result in results], max_abs, mc, stats.acceptance)
    return estimates


def estimate(lattice: ClassicalLatticeSpec, insertions: list[InsertionSpec], mc: McConfig) -> Estimate:
    """Monte Carlo average of a product of insertion factors.

    Args:
        lattice: Real-coupling lattice.
        insertions: Factors to average; empty gives mean 1 with zero error.
        mc: Sampler settings.

    Returns:
        The merged estimate of all chains.
    """
    return estimate_many(lattice, {"value": insertions}, mc)["value"]


def estimate_correlators(
    lattice: ClassicalLatticeSpec, mc: McConfig, site: int = 0, slice: int = 0
) -> tuple[CorrelatorSet, dict[str, Estimate]]:
    """Classical-mc correlators of the pair (site, site+1) with jackknife errors."""
    observables = {
        name: insertion_for(obs, lattice, slice)
        for name, obs in correlator_observables(lattice, site).items()
    }
    estimates = estimate_many(lattice, observables, mc)
    means = {name: est.mean for name, est in estimates.items()}

    correlators = CorrelatorSet(
        provenance=Provenance.CLASSICAL_MC,
        site=site,
        std_err=tuple(estimates[name].std_err for name in ("m_x", "c_x", "c_y", "c_z")),
        **means,
    )
    logger.info(
        "MC correlators n=%d: %s (acceptance %.3f)",
        lattice.rows,
        means,
        estimates["m_x"].acceptance,
    )
    return correlators, estimates
