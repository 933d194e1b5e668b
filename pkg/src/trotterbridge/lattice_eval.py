"""Exact evaluation of classical Ising lattices.

Two routes: exhaustive enumeration of all 2^(M n) configurations (small
lattices) and the row-to-row transfer matrix, traced over the periodic
Trotter direction (up to M = 12 columns). Both work in log space so that
beta J = 20 does not overflow, and both evaluate insertion estimators.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import settings
from .errors import BridgeNumericError, BridgeValidationError
from .spinchain_exact import Boundary, CorrelatorSet, Provenance
from .trotter_map import (
    ClassicalLatticeSpec,
    InsertionKind,
    InsertionSpec,
    InvalidLatticeError,
    Observable,
    ObservableKind,
    halve_trotter_number,
    insertion_for,
    lattice_bonds,
)

logger = logging.getLogger(__name__)


class LatticeEvalError(Exception):
    """Marker base for lattice evaluation errors."""

    module = "lattice_eval"


class SizeCapError(LatticeEvalError, BridgeNumericError):
    """Lattice too large for the requested exact method."""


class ComplexCouplingError(LatticeEvalError, BridgeValidationError):
    """Exact lattice evaluation needs real couplings."""


class MissingContextError(LatticeEvalError, BridgeValidationError):
    """Lattice does not carry the inverse temperature needed for a free energy."""


class EvalMethod(str, Enum):
    ENUM = "enum"
    TRANSFER = "transfer-matrix"


@dataclass(frozen=True, eq=False)
class SpinConfiguration:
    """Spins s = +/-1 of a lattice, shape (rows, columns).

    The packed form sets bit k*M + j when spin (j, k) is -1.
    """

    spins: np.ndarray

    @property
    def rows(self) -> int:
        return self.spins.shape[0]

    @property
    def columns(self) -> int:
        return self.spins.shape[1]

    def packed(self) -> int:
        bits = (self.spins.reshape(-1) < 0).astype(np.int64)
        return int(sum(int(b) << s for s, b in enumerate(bits)))

    @classmethod
    def from_packed(cls, bits: int, columns: int, rows: int) -> "SpinConfiguration":
        count = columns * rows
        flat = np.array([1 - 2 * ((bits >> s) & 1) for s in range(count)], dtype=np.int8)
        return cls(flat.reshape(rows, columns))


@dataclass(frozen=True)
class LatticeObservableResult:
    """An exact lattice average and the log partition function it came with."""

    value: float
    log_partition: float
    method: EvalMethod

    def to_record(self) -> dict:
        return {"method": self.method.value, "value": self.value, "log_partition": self.log_partition}


def _require_real(lattice: ClassicalLatticeSpec) -> None:
    if not lattice.is_real:
        raise ComplexCouplingError("Exact lattice evaluation needs real couplings")


def _check_enum_cap(lattice: ClassicalLatticeSpec) -> None:
    if lattice.num_spins > settings.max_spins:
        raise SizeCapError(
            f"{lattice.num_spins} spins exceed the enumeration cap of {settings.max_spins} "
            f"(BRIDGE_MAX_SPINS, at most 28)"
        )


def _check_transfer_cap(lattice: ClassicalLatticeSpec) -> None:
    if lattice.columns > settings.max_transfer_columns:
        raise SizeCapError(
            f"{lattice.columns} columns exceed the transfer-matrix cap of {settings.max_transfer_columns}"
        )


def _check_insertions(lattice: ClassicalLatticeSpec, insertions: list[InsertionSpec]) -> None:
    for ins in insertions:
        if not 0 <= ins.site < lattice.columns or not 0 <= ins.slice < lattice.rows:
            raise InvalidLatticeError(
                f"Insertion at (site {ins.site}, slice {ins.slice}) outside "
                f"{lattice.columns}x{lattice.rows} lattice"
            )


def insertion_weight(
    spins: np.ndarray, lattice: ClassicalLatticeSpec, insertions: list[InsertionSpec]
) -> np.ndarray:
    """Product of insertion factors for configurations of shape (..., rows, columns)."""
    n = lattice.rows
    weight = np.ones(spins.shape[:-2])
    for ins in insertions:
        here = spins[..., ins.slice, ins.site]
        after = spins[..., (ins.slice + 1) % n, ins.site]
        if ins.kind is InsertionKind.Z:
            weight = weight * here
        elif ins.kind is InsertionKind.XBOND:
            weight = weight * np.exp(-ins.strength * here * after)
        else:
            weight = weight * np.exp(-ins.strength * here * after) * after
        weight = weight * ins.coefficient
    return weight


def _enumerate(lattice: ClassicalLatticeSpec, insertions: list[InsertionSpec]) -> tuple[float, float]:
    """(log Z, <W>) by exhaustive enumeration in fixed-stride chunks."""
    _require_real(lattice)
    _check_enum_cap(lattice)
    _check_insertions(lattice, insertions)

    N = lattice.num_spins
    total = 1 << N
    chunk = 1 << min(settings.enum_chunk_bits, N)
    first, second, weights = lattice_bonds(lattice)
    shifts = np.arange(N, dtype=np.int64)

    maxima, z_parts, w_parts = [], [], []
    for start in range(0, total, chunk):
        configs = np.arange(start, start + chunk, dtype=np.int64)
        spins = (1 - 2 * ((configs[:, None] >> shifts) & 1)).astype(float)
        energy = (spins[:, first] * spins[:, second]) @ weights
        top = energy.max()
        boltzmann = np.exp(energy - top)
        maxima.append(top)
        z_parts.append(boltzmann.sum())
        if insertions:
            shaped = spins.reshape(-1, lattice.rows, lattice.columns)
            w_parts.append(np.dot(boltzmann, insertion_weight(shaped, lattice, insertions)))

    maxima = np.array(maxima)
    top = maxima.max()
    scale = np.exp(maxima - top)
    z = float(np.dot(z_parts, scale))
    log_z = top + math.log(z)
    value = float(np.dot(w_parts, scale) / z) if insertions else 1.0
    return log_z, value


def enumerate_log_z(lattice: ClassicalLatticeSpec) -> float:
    """log of the sum of exp(bond energies) over every configuration.

    The log_prefactor is not included.

    Raises:
        SizeCapError: If M*n exceeds settings.max_spins.
        ComplexCouplingError: If a coupling is complex.
    """
    log_z, _ = _enumerate(lattice, [])
    return log_z


def _row_spins(columns: int) -> np.ndarray:
    """All 2^M rows as spins, bit j of the row index set when spin j is -1."""
    rows = np.arange(1 << columns, dtype=np.int64)
    return (1 - 2 * ((rows[:, None] >> np.arange(columns)) & 1)).astype(float)


class _TransferContraction:
    """Row transfer matrix of a lattice with its spectrum, shared across observables.

    T[r, r'] = exp(S(r)/2 + S(r')/2 + K_n sum_j s_j(r) s_j(r')) where S is
    the spatial bond energy of a row; the symmetric fold keeps T symmetric.
    """

    def __init__(self, lattice: ClassicalLatticeSpec):
        _require_real(lattice)
        _check_transfer_cap(lattice)

        self.lattice = lattice
        M = lattice.columns
        self.row_spins = _row_spins(M)

        spatial_columns = range(M) if lattice.boundary_space is Boundary.PERIODIC else range(M - 1)
        row_energy = np.zeros(len(self.row_spins))
        for j in spatial_columns:
            row_energy += lattice.spatial_coupling * self.row_spins[:, j] * self.row_spins[:, (j + 1) % M]

        exponent = (
            0.5 * row_energy[:, None]
            + 0.5 * row_energy[None, :]
            + lattice.temporal_coupling * (self.row_spins @ self.row_spins.T)
        )
        self.log_scale = float(exponent.max())
        T = np.exp(exponent - self.log_scale)

        eigenvalues, self.vectors = np.linalg.eigh(T)
        self.top = float(eigenvalues.max())
        if not self.top > 0:
            raise BridgeNumericError("Transfer matrix has no positive leading eigenvalue")
        self.ratios = eigenvalues / self.top
        self.matrix = T / self.top
        self.trace = float(np.sum(self.ratios**lattice.rows))

    def log_z(self) -> float:
        n = self.lattice.rows
        return n * (self.log_scale + math.log(self.top)) + math.log(self.trace)

    def _power(self, p: int) -> np.ndarray:
        return (self.vectors * self.ratios**p) @ self.vectors.T

    def _modified(self, insertions: list[InsertionSpec]) -> np.ndarray:
        factor = np.ones_like(self.matrix)
        for ins in insertions:
            here = self.row_spins[:, ins.site][:, None]
            after = self.row_spins[:, ins.site][None, :]
            if ins.kind is InsertionKind.Z:
                factor = factor * here
            elif ins.kind is InsertionKind.XBOND:
                factor = factor * np.exp(-ins.strength * here * after)
            else:
                factor = factor * np.exp(-ins.strength * here * after) * after
            factor = factor * ins.coefficient
        return self.matrix * factor

    def average(self, insertions: list[InsertionSpec]) -> float:
        """<W> = tr(prod_k T_k) / tr(T^n) with modified matrices at insertion slices."""
        if not insertions:
            return 1.0
        _check_insertions(self.lattice, insertions)

        by_slice: dict[int, list[InsertionSpec]] = {}
        for ins in insertions:
            by_slice.setdefault(ins.slice, []).append(ins)

        product = np.eye(len(self.matrix))
        position = 0
        for slice_ in sorted(by_slice):
            product = product @ self._power(slice_ - position) @ self._modified(by_slice[slice_])
            position = slice_ + 1
        product = product @ self._power(self.lattice.rows - position)
        return float(np.trace(product) / self.trace)


def transfer_log_z(lattice: ClassicalLatticeSpec) -> float:
    """log Z by row-transfer-matrix contraction, tr T^n over the periodic Trotter direction.

    Raises:
        SizeCapError: If M exceeds settings.max_transfer_columns.
        ComplexCouplingError: If a coupling is complex.
    """
    return _TransferContraction(lattice).log_z()


def _pick_method(lattice: ClassicalLatticeSpec, method: EvalMethod | str | None) -> EvalMethod:
    if method is not None:
        return EvalMethod(method)
    if lattice.columns <= settings.max_transfer_columns:
        return EvalMethod.TRANSFER
    return EvalMethod.ENUM


def expectation(
    lattice: ClassicalLatticeSpec,
    insertions: list[InsertionSpec],
    method: EvalMethod | str | None = None,
) -> LatticeObservableResult:
    """Boltzmann average of the product of insertion factors.

    Args:
        lattice: Real-coupling lattice.
        insertions: Factors to multiply; an empty list averages to 1.
        method: enum or transfer-matrix; picked from the caps when None.

    Raises:
        InvalidLatticeError: If an insertion lies outside the lattice.
        SizeCapError: If the lattice exceeds the method's cap.
    """
    method = _pick_method(lattice, method)
    if method is EvalMethod.ENUM:
        log_z, value = _enumerate(lattice, insertions)
    else:
        contraction = _TransferContraction(lattice)
        log_z, value = contraction.log_z(), contraction.average(insertions)
    return LatticeObservableResult(value=value, log_partition=log_z, method=method)


def free_energy(lattice: ClassicalLatticeSpec, method: EvalMethod | str | None = None) -> float:
    """F = -(1/beta) (log_prefactor + log Z_lattice).

    Raises:
        MissingContextError: If the lattice carries no beta.
    """
    if lattice.beta is None:
        raise MissingContextError("Free energy needs the beta of the originating chain")
    _require_real(lattice)
    method = _pick_method(lattice, method)
    log_z = enumerate_log_z(lattice) if method is EvalMethod.ENUM else transfer_log_z(lattice)
    return -(float(np.real(lattice.log_prefactor)) + log_z) / lattice.beta


def correlator_observables(lattice: ClassicalLatticeSpec, site: int) -> dict[str, Observable]:
    """The five observables behind a CorrelatorSet for the pair (site, site+1)."""
    M = lattice.columns
    if M < 2:
        raise InvalidLatticeError("Nearest-neighbour correlators need at least two columns")
    if site + 1 < M:
        nxt = site + 1
    elif lattice.boundary_space is Boundary.PERIODIC:
        nxt = 0
    else:
        raise InvalidLatticeError(f"Site {site} has no right neighbour on an open lattice of {M} columns")

    return {
        "m_x": Observable(ObservableKind.SX, (site,)),
        "m_x_next": Observable(ObservableKind.SX, (nxt,)),
        "c_x": Observable(ObservableKind.SXSX, (site, nxt)),
        "c_y": Observable(ObservableKind.SYSY, (site, nxt)),
        "c_z": Observable(ObservableKind.SZSZ, (site, nxt)),
    }


def _correlator_values(
    lattice: ClassicalLatticeSpec, site: int, method: EvalMethod, slice: int
) -> dict[str, float]:
    observables = correlator_observables(lattice, site)
    if method is EvalMethod.TRANSFER:
        contraction = _TransferContraction(lattice)
        return {
            name: contraction.average(insertion_for(obs, lattice, slice))
            for name, obs in observables.items()
        }
    return {
        name: _enumerate(lattice, insertion_for(obs, lattice, slice))[1]
        for name, obs in observables.items()
    }


def trotter_error(
    lattice: ClassicalLatticeSpec,
    values: dict[str, float],
    site: int = 0,
    method: EvalMethod | str | None = None,
    slice: int = 0,
) -> tuple[float, float, float, float]:
    """|c(n) - c(n/2)| for (m_x, c_x, c_y, c_z); zero when n is odd.

    values are the correlators already computed at n. m_x takes the larger
    deviation of the pair's two magnetisations.
    """
    if lattice.rows % 2:
        logger.debug("No Trotter-error estimate for odd n=%d", lattice.rows)
        return (0.0, 0.0, 0.0, 0.0)
    coarse = _correlator_values(halve_trotter_number(lattice), site, _pick_method(lattice, method), slice // 2)
    diff = {name: abs(values[name] - coarse[name]) for name in values}
    return (max(diff["m_x"], diff["m_x_next"]), diff["c_x"], diff["c_y"], diff["c_z"])


def classical_correlators(
    lattice: ClassicalLatticeSpec,
    site: int = 0,
    method: EvalMethod | str | None = None,
    slice: int = 0,
    with_trotter_error: bool = False,
) -> CorrelatorSet:
    """Nearest-neighbour correlators estimated exactly on the classical lattice.

    With with_trotter_error the set also carries |c(n) - c(n/2)| from the
    same chain mapped with half the slices, which sets the tolerance of the
    density-matrix reconstruction.
    """
    method = _pick_method(lattice, method)
    values = _correlator_values(lattice, site, method, slice)
    provenance = Provenance.CLASSICAL_TM if method is EvalMethod.TRANSFER else Provenance.CLASSICAL_ENUM
    errors = trotter_error(lattice, values, site, method, slice) if with_trotter_error else (0.0, 0.0, 0.0, 0.0)

    logger.debug("Classical correlators (%s, n=%d): %s", method.value, lattice.rows, values)
    return CorrelatorSet(provenance=provenance, site=site, trotter_err=errors, **values)
