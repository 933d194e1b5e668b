"""Quantum-to-classical mapping: Trotter slicing of the TFIM and of a single qubit.

A TFIM chain of M sites at inverse temperature beta becomes an anisotropic
M x n classical Ising lattice: spatial coupling K/n along each row, temporal
coupling K_n = 1/2 ln coth(gamma/n) between consecutive rows (periodic in
time), and a configuration-independent prefactor. The single driven qubit
H = E sz + D sx becomes a one-dimensional chain whose transfer elements are
solved from the exact slice matrix, so the chain reproduces the propagator
for every number of slices m.

Lattice spins are indexed row-major: spin (j, k) of column j and row
(Trotter slice) k has index k * M + j.
"""

import itertools
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np
from scipy.linalg import expm

from .errors import BridgeNumericError, BridgeValidationError
from .spinchain_exact import SIGMA_X, SIGMA_Z, Boundary, QuantumChainSpec
from .utils import canonical_json

LATTICE_SCHEMA_VERSION = 1
MAX_PATH_SLICES = 20


class TrotterMapError(Exception):
    """Marker base for mapping errors."""

    module = "trotter_map"


class DegenerateMappingError(TrotterMapError, BridgeValidationError):
    """B = 0: the lattice decouples in time and K_n is infinite."""


class SingularMappingError(TrotterMapError, BridgeValidationError):
    """Off-diagonal slice element vanishes, so the chain coupling is infinite."""


class UnsupportedObservableError(TrotterMapError, BridgeValidationError):
    """Observable has no classical insertion estimator."""


class InvalidLatticeError(TrotterMapError, BridgeValidationError):
    """Lattice parameters or insertion positions are invalid."""


class PathSumLimitError(TrotterMapError, BridgeNumericError):
    """Too many slices for an explicit sum over paths."""


@dataclass(frozen=True)
class ClassicalLatticeSpec:
    """An M x n anisotropic Ising lattice, periodic in the Trotter direction.

    Weight of a configuration: exp(sum_rows sum_j spatial * s[j,k] s[j+1,k]
    + temporal * s[j,k] s[j,k+1]). log_prefactor is reported separately and
    beta, when known, is the inverse temperature of the originating chain.
    """

    columns: int
    rows: int
    spatial_coupling: float | complex
    temporal_coupling: float | complex
    log_prefactor: float = 0.0
    boundary_space: Boundary = Boundary.PERIODIC
    boundary_time: str = "periodic"
    beta: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundary_space", Boundary(self.boundary_space))
        if self.columns < 1 or self.rows < 1:
            raise InvalidLatticeError(f"Lattice needs positive extent, got {self.columns}x{self.rows}")
        if self.boundary_time != "periodic":
            raise InvalidLatticeError("The Trotter direction is always periodic (trace)")
        if self.beta is not None and not self.beta > 0:
            raise InvalidLatticeError(f"beta must be positive, got {self.beta}")

    @property
    def num_spins(self) -> int:
        return self.columns * self.rows

    @property
    def num_bonds(self) -> int:
        spatial = self.columns if self.boundary_space is Boundary.PERIODIC else self.columns - 1
        return spatial * self.rows + self.columns * self.rows

    @property
    def is_real(self) -> bool:
        return all(
            np.isreal(c) for c in (self.spatial_coupling, self.temporal_coupling, self.log_prefactor)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": LATTICE_SCHEMA_VERSION,
            "columns": self.columns,
            "rows": self.rows,
            "spatial_coupling": _plain(self.spatial_coupling),
            "temporal_coupling": _plain(self.temporal_coupling),
            "log_prefactor": _plain(self.log_prefactor),
            "boundary_space": self.boundary_space.value,
            "boundary_time": self.boundary_time,
            "beta": None if self.beta is None else float(self.beta),
        }

    def to_json(self) -> str:
        """Canonical JSON document, numbers printed with 17 significant digits."""
        return canonical_json(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ClassicalLatticeSpec":
        """Parse a canonical lattice document.

        Raises:
            InvalidLatticeError: If the document is malformed.
        """
        try:
            data = json.loads(text)
            version = data.get("schema_version", LATTICE_SCHEMA_VERSION)
            if version != LATTICE_SCHEMA_VERSION:
                raise InvalidLatticeError(f"Unsupported lattice schema version {version}")
            return cls(
                columns=int(data["columns"]),
                rows=int(data["rows"]),
                spatial_coupling=_number(data["spatial_coupling"]),
                temporal_coupling=_number(data["temporal_coupling"]),
                log_prefactor=_number(data.get("log_prefactor", 0.0)),
                boundary_space=data.get("boundary_space", "periodic"),
                boundary_time=data.get("boundary_time", "periodic"),
                beta=data.get("beta"),
            )
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, InvalidLatticeError):
                raise
            raise InvalidLatticeError(f"Malformed lattice document: {e}")


def _plain(value: float | complex) -> float | complex:
    value = complex(value)
    return value.real if value.imag == 0 else value


def _number(value: Any) -> float | complex:
    if isinstance(value, dict):
        return complex(float(value["re"]), float(value["im"]))
    return float(value)


def lattice_bonds(lattice: ClassicalLatticeSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All bonds of a lattice as (first spin, second spin, coupling) arrays.

    Spatial bonds come first, then temporal bonds from row k to row k+1
    (mod n). There are M*n spatial bonds for periodic space, (M-1)*n for
    open space, and always M*n temporal bonds. With n = 1 the temporal bond
    joins a spin to itself and contributes a constant.
    """
    M, n = lattice.columns, lattice.rows
    first, second, weight = [], [], []

    spatial_columns = range(M) if lattice.boundary_space is Boundary.PERIODIC else range(M - 1)
    for k in range(n):
        for j in spatial_columns:
            first.append(k * M + j)
            second.append(k * M + (j + 1) % M)
            weight.append(lattice.spatial_coupling)

    for k in range(n):
        for j in range(M):
            first.append(k * M + j)
            second.append(((k + 1) % n) * M + j)
            weight.append(lattice.temporal_coupling)

    weights = np.array(weight, dtype=complex)
    if lattice.is_real:
        weights = weights.real
    return np.array(first, dtype=np.int64), np.array(second, dtype=np.int64), weights


def temporal_coupling(x: float) -> float:
    """K_n = 1/2 ln coth(x) with x = gamma / n, stable for tiny and large x."""
    if x <= 0:
        raise DegenerateMappingError(f"gamma/n must be positive, got {x}")
    if x < 0.5:
        return -0.5 * math.log(math.tanh(x))
    return math.atanh(math.exp(-2.0 * x))


def _log_half_sinh(x: float) -> float:
    """ln(sinh(x) / 2) for x > 0 without overflow."""
    if x < 20.0:
        return math.log(0.5 * math.sinh(x))
    return x - math.log(4.0) + math.log1p(-math.exp(-2.0 * x))


def map_tfim(spec: QuantumChainSpec, n: int) -> ClassicalLatticeSpec:
    """Map a TFIM chain onto its M x n classical lattice.

    Uses the first-order splitting e^{(K/n) sum sz sz} e^{(gamma/n) sum sx} per
    slice, with K = beta J and gamma = beta B.

    Args:
        spec: The quantum chain.
        n: Trotter number (rows of the lattice).

    Returns:
        Lattice with spatial coupling K/n, temporal coupling K_n and
        log_prefactor M (n/2) ln(1/2 sinh(2 gamma/n)).

    Raises:
        DegenerateMappingError: If B = 0 (use the classical chain directly).
        InvalidLatticeError: If B < 0 or n < 1.
    """
    if n < 1:
        raise InvalidLatticeError(f"Trotter number must be >= 1, got {n}")
    if spec.field == 0:
        raise DegenerateMappingError(
            "B = 0 decouples the lattice in time (K_n is infinite); "
            "the chain is already classical, evaluate it without mapping"
        )
    if spec.field < 0:
        raise InvalidLatticeError(f"Mapping requires B > 0, got {spec.field}")

    gamma = spec.beta * spec.field
    K = spec.beta * spec.coupling
    x = gamma / n

    return ClassicalLatticeSpec(
        columns=spec.sites,
        rows=n,
        spatial_coupling=K / n,
        temporal_coupling=temporal_coupling(x),
        log_prefactor=spec.sites * (n / 2) * _log_half_sinh(2.0 * x),
        boundary_space=spec.boundary,
        beta=spec.beta,
    )


def halve_trotter_number(lattice: ClassicalLatticeSpec) -> ClassicalLatticeSpec:
    """The same mapped chain with n/2 slices.

    K_n = 1/2 ln coth(gamma/n) is its own inverse, so gamma/n is recovered
    from the temporal coupling alone; the result equals map_tfim(spec, n/2).

    Raises:
        InvalidLatticeError: If n is odd or a coupling is complex or not positive.
    """
    if lattice.rows % 2:
        raise InvalidLatticeError(f"Cannot halve an odd Trotter number {lattice.rows}")
    if not lattice.is_real:
        raise InvalidLatticeError("Only real-coupling lattices can be re-mapped")
    temporal = float(np.real(lattice.temporal_coupling))
    if not temporal > 0:
        raise InvalidLatticeError(f"Temporal coupling must be positive, got {temporal}")

    x = 2.0 * temporal_coupling(temporal)
    rows = lattice.rows // 2
    return ClassicalLatticeSpec(
        columns=lattice.columns,
        rows=rows,
        spatial_coupling=2.0 * float(np.real(lattice.spatial_coupling)),
        temporal_coupling=temporal_coupling(x),
        log_prefactor=lattice.columns * (rows / 2) * _log_half_sinh(2.0 * x),
        boundary_space=lattice.boundary_space,
        beta=lattice.beta,
    )


class InsertionKind(str, Enum):
    """Ways a quantum operator modifies the classical weight."""

    Z = "Z"
    XBOND = "XBond"
    YSPINBOND = "YSpinBond"


@dataclass(frozen=True)
class InsertionSpec:
    """One factor of an insertion estimator.

    Z reads s[site, slice]. XBond multiplies by exp(-strength s[site, l] s[site, l+1]).
    YSpinBond does the same and also reads s[site, l+1]. coefficient is a
    constant prefactor (-1 on the first factor of a sy sy pair).
    """

    kind: InsertionKind
    site: int
    slice: int = 0
    strength: float = 0.0
    coefficient: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", InsertionKind(self.kind))

    def shifted(self, offset: int, rows: int) -> "InsertionSpec":
        """Same insertion moved by `offset` slices (mod rows)."""
        return InsertionSpec(self.kind, self.site, (self.slice + offset) % rows, self.strength, self.coefficient)


class ObservableKind(str, Enum):
    SX = "sx"
    SZ = "sz"
    SXSX = "sxsx"
    SYSY = "sysy"
    SZSZ = "szsz"


@dataclass(frozen=True)
class Observable:
    """A quantum observable on one site or a pair of sites."""

    kind: ObservableKind
    sites: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ObservableKind(self.kind))
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))

    def __str__(self) -> str:
        return f"{self.kind.value}{list(self.sites)}"


def _check_position(lattice: ClassicalLatticeSpec, site: int, slice_: int) -> None:
    if not 0 <= site < lattice.columns:
        raise InvalidLatticeError(f"Site {site} outside lattice of {lattice.columns} columns")
    if not 0 <= slice_ < lattice.rows:
        raise InvalidLatticeError(f"Slice {slice_} outside lattice of {lattice.rows} rows")


def _adjacent(lattice: ClassicalLatticeSpec, i: int, j: int) -> bool:
    if j == i + 1:
        return True
    return lattice.boundary_space is Boundary.PERIODIC and i == lattice.columns - 1 and j == 0


def insertion_for(
    observable: Observable, lattice: ClassicalLatticeSpec, slice: int = 0
) -> list[InsertionSpec]:
    """Classical insertions whose lattice average reproduces a quantum observable.

    sx_j        -> XBond at (j, l): exp(-2 K_n s[j,l] s[j,l+1])
    sz_j        -> Z at (j, l)
    sx_s sx_t   -> two XBonds on the same slice
    sy_i sy_i+1 -> -s[i,l+1] s[i+1,l+1] exp(-2 K_n (s[i,l]s[i,l+1] + s[i+1,l]s[i+1,l+1]))
    sz_i sz_i+1 -> two Z insertions on the same row

    Raises:
        UnsupportedObservableError: For observables without an estimator.
        InvalidLatticeError: For sites or slices outside the lattice.
    """
    try:
        kind = ObservableKind(observable.kind)
    except ValueError:
        raise UnsupportedObservableError(f"No insertion estimator for {observable.kind!r}")

    arity = 1 if kind in (ObservableKind.SX, ObservableKind.SZ) else 2
    if len(observable.sites) != arity:
        raise UnsupportedObservableError(f"{kind.value} acts on {arity} site(s), got {observable.sites}")
    for site in observable.sites:
        _check_position(lattice, site, slice)

    strength = 2.0 * lattice.temporal_coupling

    if kind is ObservableKind.SZ:
        return [InsertionSpec(InsertionKind.Z, observable.sites[0], slice)]
    if kind is ObservableKind.SX:
        return [InsertionSpec(InsertionKind.XBOND, observable.sites[0], slice, strength)]
    if kind is ObservableKind.SZSZ:
        return [InsertionSpec(InsertionKind.Z, site, slice) for site in observable.sites]

    s, t = observable.sites
    if s == t:
        raise UnsupportedObservableError("Two-point observables need distinct sites")
    if kind is ObservableKind.SXSX:
        return [InsertionSpec(InsertionKind.XBOND, site, slice, strength) for site in observable.sites]

    # sy sy = -(sx sz) x (sx sz); the sz factors read the row after the bond
    if not _adjacent(lattice, s, t):
        raise UnsupportedObservableError(f"sy sy estimator needs adjacent sites, got {s}, {t}")
    return [
        InsertionSpec(InsertionKind.YSPINBOND, s, slice, strength, coefficient=-1.0),
        InsertionSpec(InsertionKind.YSPINBOND, t, slice, strength),
    ]


@dataclass(frozen=True)
class TransferElementConstants:
    """Constants of <s'| e^{-eps H} |s> = A exp(h s s' + K (s + s')).

    On the real (thermal) branch a negative off-diagonal element is carried
    by off_diagonal_sign = -1 so that A, h, K stay real; the sign cancels on
    closed chains. Complex branches use principal logarithms and record the
    branch offset of h relative to 1/4 Log(ad/b^2).
    """

    A: complex | float
    h: complex | float
    K: complex | float
    epsilon: complex | float
    log_A: complex | float
    off_diagonal_sign: int = 1
    branch: int = 0

    def entries(self) -> tuple[complex, complex, complex]:
        """Reconstructed (a, d, b): the up-up, down-down and off-diagonal elements."""
        a = np.exp(self.log_A + self.h + 2 * self.K)
        d = np.exp(self.log_A + self.h - 2 * self.K)
        b = self.off_diagonal_sign * np.exp(self.log_A - self.h)
        return a, d, b

    def transfer_matrix(self) -> np.ndarray:
        """2x2 matrix T[s', s] in the (+1, -1) basis."""
        a, d, b = self.entries()
        return np.array([[a, b], [b, d]])


def qubit_hamiltonian(energy: float, tunnelling: float) -> np.ndarray:
    """H = E sz + D sx (real symmetric)."""
    return (energy * SIGMA_Z + tunnelling * SIGMA_X).real


def _normalise_epsilon(epsilon: complex | float) -> complex | float:
    epsilon = complex(epsilon)
    return epsilon.real if epsilon.imag == 0 else epsilon


def slice_matrix(energy: float, tunnelling: float, epsilon: complex | float) -> np.ndarray:
    """Exact slice e^{-eps H}; real whenever eps is real."""
    return expm(-_normalise_epsilon(epsilon) * qubit_hamiltonian(energy, tunnelling))


def solve_transfer_element(energy: float, tunnelling: float, epsilon: complex) -> TransferElementConstants:
    """Solve A, h, K by matching the exact 2x2 slice matrix element by element.

    With a = <+|S|+>, d = <-|S|->, b = <+|S|->:
        h = 1/4 ln(a d / b^2),  K = 1/4 ln(a / d),  A = (a d b^2)^(1/4)
    taken on a consistent branch so A e^{h+2K} = a, A e^{h-2K} = d and
    A e^{-h} = b hold by construction.

    Raises:
        SingularMappingError: If D = 0 (b vanishes and h diverges).
    """
    if tunnelling == 0:
        raise SingularMappingError("D = 0 makes the off-diagonal element vanish; h is infinite")

    S = slice_matrix(energy, tunnelling, epsilon)
    a, d, b = S[0, 0], S[1, 1], S[0, 1]

    if abs(b) == 0:
        raise SingularMappingError(f"Off-diagonal element underflowed for eps = {epsilon}")

    epsilon = _normalise_epsilon(epsilon)
    if np.isrealobj(S) and a > 0 and d > 0:
        sign = -1 if b < 0 else 1
        la, ld, lb = math.log(a), math.log(d), math.log(abs(b))
        h = (la + ld - 2 * lb) / 4
        return TransferElementConstants(
            A=math.exp((la + ld + 2 * lb) / 4),
            h=h,
            K=(la - ld) / 4,
            epsilon=epsilon,
            log_A=(la + ld + 2 * lb) / 4,
            off_diagonal_sign=sign,
        )

    la, ld, lb = np.log(complex(a)), np.log(complex(d)), np.log(complex(b))
    h = (la + ld - 2 * lb) / 4
    principal = np.log(complex(a * d / b**2)) / 4
    branch = int(round((h - principal).imag * 4 / (2 * math.pi)))
    log_A = (la + ld + 2 * lb) / 4
    return TransferElementConstants(
        A=complex(np.exp(log_A)),
        h=complex(h),
        K=complex((la - ld) / 4),
        epsilon=complex(epsilon),
        log_A=complex(log_A),
        branch=branch,
    )


def _epsilon(time: float, m: int, imaginary_time: bool) -> complex | float:
    if m < 1:
        raise InvalidLatticeError(f"Number of slices must be >= 1, got {m}")
    return time / m if imaginary_time else 1j * time / m


def qubit_chain_propagator(
    energy: float,
    tunnelling: float,
    time: float,
    m: int,
    imaginary_time: bool = False,
) -> np.ndarray:
    """Contract m exact transfer elements into the qubit propagator.

    Args:
        energy: E in H = E sz + D sx.
        tunnelling: D in H = E sz + D sx.
        time: t, or beta when imaginary_time is set (analytic continuation it -> beta).
        m: Number of slices.
        imaginary_time: Return e^{-beta H} instead of e^{-iHt}.

    Returns:
        2x2 matrix U[s_out, s_in] = <s_out| e^{-iHt} |s_in> in the (+1, -1) basis.
    """
    constants = solve_transfer_element(energy, tunnelling, _epsilon(time, m, imaginary_time))
    return np.linalg.matrix_power(constants.transfer_matrix(), m)


def classical_chain_sum(constants: TransferElementConstants, m: int, first: int, last: int) -> complex:
    """Sum the classical chain weight over all paths with pinned ends.

    Each path s_0 = first, s_1, ..., s_m = last contributes
    A^m exp(sum_k h s_k s_{k+1} + K (s_k + s_{k+1})) times the off-diagonal
    sign for every domain wall.

    Raises:
        PathSumLimitError: If m exceeds MAX_PATH_SLICES.
    """
    if m > MAX_PATH_SLICES:
        raise PathSumLimitError(f"{m} slices is too many paths to enumerate (max {MAX_PATH_SLICES})")
    if first not in (1, -1) or last not in (1, -1):
        raise InvalidLatticeError("Pinned spins must be +1 or -1")

    total = 0j
    for middle in itertools.product((1, -1), repeat=m - 1):
        path = (first, *middle, last)
        exponent = m * constants.log_A
        walls = 0
        for s, s_next in zip(path, path[1:]):
            exponent += constants.h * s * s_next + constants.K * (s + s_next)
            walls += s != s_next
        total += constants.off_diagonal_sign**walls * np.exp(exponent)
    return complex(total)
