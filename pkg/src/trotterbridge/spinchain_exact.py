"""Exact dense quantum oracle for the transverse-field Ising chain.

Builds H = -J sum sz_j sz_{j+1} - B sum sx_j on 2^M dimensions, diagonalises
it densely and extracts nearest-neighbour correlators and two-site reduced
density matrices. Every classical estimate in this package is judged against
the numbers produced here.

Site 0 is the leftmost tensor factor; |0> is the sz = +1 state.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import reduce

import numpy as np
from scipy.special import logsumexp

from .config import settings
from .errors import BridgeNumericError, BridgeValidationError

logger = logging.getLogger(__name__)

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# sy = i sx sz
SIGMA_Y = 1j * SIGMA_X @ SIGMA_Z

HERMITIAN_TOL = 1e-12
SYMMETRY_TOL = 1e-10
DENSITY_TOL = 1e-10


class SpinChainError(Exception):
    """Marker base for errors raised by the exact oracle."""

    module = "spinchain_exact"


class InvalidChainError(SpinChainError, BridgeValidationError):
    """Chain parameters violate the model invariants."""


class SiteRangeError(SpinChainError, BridgeValidationError):
    """Requested site pair does not exist on the chain."""


class DimensionLimitError(SpinChainError, BridgeNumericError):
    """Chain too long for dense diagonalisation."""


class EigensolverError(SpinChainError, BridgeNumericError):
    """Dense eigensolver failed to converge."""


class SymmetryBreakingError(SpinChainError, BridgeNumericError):
    """State violates the Z2/reality zero pattern the correlator set assumes."""


class Boundary(str, Enum):
    """Spatial boundary condition of the chain."""

    PERIODIC = "periodic"
    OPEN = "open"


class StateKind(str, Enum):
    PURE = "pure"
    THERMAL = "thermal"


class Provenance(str, Enum):
    """Where a set of correlators came from."""

    QUANTUM_EXACT = "quantum-exact"
    CLASSICAL_ENUM = "classical-enum"
    CLASSICAL_TM = "classical-tm"
    CLASSICAL_MC = "classical-mc"

    @property
    def is_exact(self) -> bool:
        return self is not Provenance.CLASSICAL_MC


def default_beta(coupling: float, field_strength: float) -> float:
    """Inverse temperature used as the ground-state proxy: 20 / max(|J|, |B|)."""
    scale = max(abs(coupling), abs(field_strength))
    if scale == 0:
        raise InvalidChainError("J and B cannot both be zero")
    return 20.0 / scale


@dataclass(frozen=True)
class QuantumChainSpec:
    """The quantum side: a TFIM chain of M sites at inverse temperature beta.

    When beta is omitted the ground-state proxy 20 / max(|J|, |B|) is used.
    """

    sites: int
    coupling: float
    field: float
    boundary: Boundary = Boundary.PERIODIC
    beta: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.sites < 1:
            raise InvalidChainError(f"Chain needs at least one site, got {self.sites}")
        if self.boundary is Boundary.PERIODIC and self.sites < 3:
            # a periodic pair would count its single bond twice
            raise InvalidChainError(
                f"Periodic chains need at least 3 sites, got {self.sites}; use an open chain"
            )
        if self.beta is None:
            object.__setattr__(self, "beta", default_beta(self.coupling, self.field))
        if not self.beta > 0 or not math.isfinite(self.beta):
            raise InvalidChainError(f"beta must be positive and finite, got {self.beta}")

    @property
    def dimension(self) -> int:
        return 2**self.sites


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A dense Hermitian matrix acting on a register of qubits."""

    matrix: np.ndarray
    boundary: Boundary = Boundary.OPEN

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix)
        object.__setattr__(self, "matrix", matrix)
        dim = matrix.shape[0]
        if matrix.ndim != 2 or matrix.shape != (dim, dim):
            raise BridgeValidationError(f"Operator must be square, got shape {matrix.shape}")
        if dim < 2 or dim & (dim - 1):
            raise BridgeValidationError(f"Operator dimension {dim} is not a power of 2")
        if not np.allclose(matrix, matrix.conj().T, rtol=0, atol=HERMITIAN_TOL):
            raise BridgeValidationError("Operator is not Hermitian")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_sites(self) -> int:
        return self.dimension.bit_length() - 1


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A pure or mixed state of the chain.

    Degenerate ground spaces are returned as the equal mixture over the
    degenerate subspace (kind THERMAL, beta None, degeneracy > 1).
    """

    kind: StateKind
    num_sites: int
    vector: np.ndarray | None = None
    density: np.ndarray | None = None
    energy: float | None = None
    beta: float | None = None
    log_partition: float | None = None
    degeneracy: int = 1
    boundary: Boundary = Boundary.OPEN

    @property
    def degenerate(self) -> bool:
        return self.degeneracy > 1

    def density_matrix(self) -> np.ndarray:
        if self.density is not None:
            return self.density
        return np.outer(self.vector, self.vector.conj())


@dataclass(frozen=True)
class CorrelatorSet:
    """Nearest-neighbour averages {m_x, c_x, c_y, c_z} of sites (i, i+1).

    std_err holds the statistical errors of (m_x, c_x, c_y, c_z) and is zero
    unless the set comes from Monte Carlo. trotter_err holds |c(n) - c(n/2)|,
    the Trotter-error estimate of exact lattice evaluations, and is zero for
    quantum sets and when no estimate exists. m_x_next is <sx_{i+1}>; it equals m_x on
    translation-invariant chains and defaults to it.
    """

    m_x: float
    c_x: float
    c_y: float
    c_z: float
    provenance: Provenance
    std_err: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    m_x_next: float | None = None
    site: int = 0
    trotter_err: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "provenance", Provenance(self.provenance))
        object.__setattr__(self, "std_err", tuple(float(e) for e in self.std_err))
        object.__setattr__(self, "trotter_err", tuple(float(e) for e in self.trotter_err))
        if self.m_x_next is None:
            object.__setattr__(self, "m_x_next", self.m_x)
        if len(self.std_err) != 4 or any(e < 0 for e in self.std_err):
            raise BridgeValidationError(f"std_err must be four non-negative values, got {self.std_err}")
        if len(self.trotter_err) != 4 or any(e < 0 for e in self.trotter_err):
            raise BridgeValidationError(f"trotter_err must be four non-negative values, got {self.trotter_err}")
        if self.provenance is Provenance.QUANTUM_EXACT and any(self.trotter_err):
            raise BridgeValidationError("quantum-exact correlators carry no Trotter error")
        if self.provenance.is_exact:
            if any(e != 0 for e in self.std_err):
                raise BridgeValidationError(f"{self.provenance.value} correlators carry no error bars")
            limit = 1 + 1e-9 + 3 * max(self.trotter_err)
            for name, value in self.values().items():
                if abs(value) > limit:
                    raise BridgeValidationError(f"{name} = {value} outside [-1, 1]")

    def uncertainty(self) -> tuple[float, float, float, float]:
        """Statistical plus Trotter error of (m_x, c_x, c_y, c_z)."""
        return tuple(s + t for s, t in zip(self.std_err, self.trotter_err))

    def values(self) -> dict[str, float]:
        return {
            "m_x": self.m_x,
            "m_x_next": self.m_x_next,
            "c_x": self.c_x,
            "c_y": self.c_y,
            "c_z": self.c_z,
        }

    def to_dict(self) -> dict:
        return {
            **self.values(),
            "provenance": self.provenance.value,
            "std_err": list(self.std_err),
            "trotter_err": list(self.trotter_err),
            "site": self.site,
        }


class InvalidDensityError(SpinChainError, BridgeValidationError):
    """Matrix is not a 4x4 Hermitian matrix of unit trace."""


@dataclass(frozen=True, eq=False)
class TwoSiteDensity:
    """Density matrix of a neighbouring pair, first site as the leading factor."""

    matrix: np.ndarray
    source: Provenance
    repaired: bool = False

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.shape != (4, 4):
            raise InvalidDensityError(f"Two-site density must be 4x4, got {matrix.shape}")
        if np.max(np.abs(matrix - matrix.conj().T)) > DENSITY_TOL:
            raise InvalidDensityError("Two-site density is not Hermitian")
        if abs(np.trace(matrix) - 1) > DENSITY_TOL:
            raise InvalidDensityError(f"Two-site density has trace {np.trace(matrix).real}")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "source", Provenance(self.source))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def pauli_string(ops: dict[int, np.ndarray], num_sites: int) -> np.ndarray:
    """Tensor product placing ops[site] on each listed site and identity elsewhere."""
    factors = [ops.get(j, IDENTITY) for j in range(num_sites)]
    return reduce(np.kron, factors)


def pauli_on_site(op: np.ndarray, site: int, num_sites: int) -> np.ndarray:
    """Embed a single-site operator at `site` of an M-site register."""
    return pauli_string({site: op}, num_sites)


def _bonds(num_sites: int, boundary: Boundary) -> list[tuple[int, int]]:
    if boundary is Boundary.PERIODIC:
        return [(j, (j + 1) % num_sites) for j in range(num_sites)]
    return [(j, j + 1) for j in range(num_sites - 1)]


def build_tfim(spec: QuantumChainSpec) -> HermitianOperator:
    """Build the transverse-field Ising Hamiltonian of a chain.

    Args:
        spec: The chain.

    Returns:
        H = -J sum sz_j sz_{j+1} - B sum sx_j; the wrap-around bond is
        included only for periodic chains.

    Raises:
        DimensionLimitError: If the chain exceeds the dense cap.
    """
    if spec.sites > settings.max_sites:
        raise DimensionLimitError(
            f"{spec.sites} sites exceed the dense cap of {settings.max_sites} "
            f"(set BRIDGE_MAX_SITES to raise it)"
        )

    M = spec.sites
    H = np.zeros((2**M, 2**M))
    for i, j in _bonds(M, spec.boundary):
        H -= spec.coupling * pauli_string({i: SIGMA_Z, j: SIGMA_Z}, M).real
    for j in range(M):
        H -= spec.field * pauli_on_site(SIGMA_X, j, M).real

    return HermitianOperator(H, boundary=spec.boundary)


def _eigh(H: HermitianOperator) -> tuple[np.ndarray, np.ndarray]:
    try:
        return np.linalg.eigh(H.matrix)
    except np.linalg.LinAlgError as e:
        raise EigensolverError(
            f"eigh failed on a {H.dimension}x{H.dimension} operator "
            f"(norm {np.linalg.norm(H.matrix):.3e}): {e}"
        )


def ground_state(H: HermitianOperator) -> QuantumState:
    """Lowest-energy state of H.

    A ground space degenerate within settings.degeneracy_tol is returned as
    the equal mixture over the subspace, never as an arbitrary vector from it.
    """
    energies, vectors = _eigh(H)
    e0 = float(energies[0])
    degeneracy = int(np.count_nonzero(energies - e0 <= settings.degeneracy_tol))

    if degeneracy == 1:
        return QuantumState(
            kind=StateKind.PURE,
            num_sites=H.num_sites,
            vector=vectors[:, 0],
            energy=e0,
            boundary=H.boundary,
        )

    logger.warning("Ground space is %d-fold degenerate; returning the symmetric mixture", degeneracy)
    subspace = vectors[:, :degeneracy]
    density = subspace @ subspace.conj().T / degeneracy
    return QuantumState(
        kind=StateKind.THERMAL,
        num_sites=H.num_sites,
        density=density,
        energy=e0,
        degeneracy=degeneracy,
        boundary=H.boundary,
    )


def thermal_state(H: HermitianOperator, beta: float) -> QuantumState:
    """Gibbs state e^{-beta H} / Z.

    The ground energy is subtracted before exponentiation, so large beta
    cannot overflow.
    """
    if not beta > 0:
        raise InvalidChainError(f"beta must be positive, got {beta}")

    energies, vectors = _eigh(H)
    e0 = float(energies[0])
    weights = np.exp(-beta * (energies - e0))
    z_shifted = weights.sum()
    density = (vectors * (weights / z_shifted)) @ vectors.conj().T

    return QuantumState(
        kind=StateKind.THERMAL,
        num_sites=H.num_sites,
        density=density,
        energy=float(np.dot(energies, weights) / z_shifted),
        beta=beta,
        log_partition=-beta * e0 + math.log(z_shifted),
        boundary=H.boundary,
    )


def log_partition(H: HermitianOperator, beta: float) -> float:
    """ln tr e^{-beta H}, evaluated from the spectrum in log space."""
    if not beta > 0:
        raise InvalidChainError(f"beta must be positive, got {beta}")
    energies = np.linalg.eigvalsh(H.matrix)
    return float(logsumexp(-beta * energies))


def free_energy(H: HermitianOperator, beta: float) -> float:
    """Quantum free energy -(1/beta) ln tr e^{-beta H}."""
    return -log_partition(H, beta) / beta


def expectation(state: QuantumState, op: np.ndarray) -> float:
    """Real part of <op> in the given state."""
    if state.vector is not None:
        return float(np.vdot(state.vector, op @ state.vector).real)
    return float(np.trace(state.density @ op).real)


def _neighbour(state: QuantumState, site: int) -> int:
    M = state.num_sites
    if not 0 <= site < M:
        raise SiteRangeError(f"Site {site} outside chain of {M} sites")
    if site + 1 < M:
        return site + 1
    if state.boundary is Boundary.PERIODIC:
        return 0
    raise SiteRangeError(f"Site {site} has no right neighbour on an open chain of {M} sites")


def correlators(state: QuantumState, site: int = 0, check_symmetry: bool = True) -> CorrelatorSet:
    """Nearest-neighbour correlators of sites (site, site+1).

    Args:
        state: Pure or thermal state.
        site: Left site of the pair; wraps on periodic chains.
        check_symmetry: Verify that <sz_i>, <sy_i> and <sx_i sz_{i+1}> vanish.

    Raises:
        SiteRangeError: If the pair does not exist.
        SymmetryBreakingError: If check_symmetry is set and the zero pattern fails.
    """
    nxt = _neighbour(state, site)
    M = state.num_sites

    def pair(left: np.ndarray | None = None, right: np.ndarray | None = None) -> np.ndarray:
        ops = {}
        if left is not None:
            ops[site] = left
        if right is not None:
            ops[nxt] = right
        return pauli_string(ops, M)

    if check_symmetry:
        odd = {
            "<sz_i>": expectation(state, pair(SIGMA_Z)),
            "<sy_i>": expectation(state, pair(SIGMA_Y)),
            "<sx_i sz_i+1>": expectation(state, pair(SIGMA_X, SIGMA_Z)),
        }
        broken = {k: v for k, v in odd.items() if abs(v) > SYMMETRY_TOL}
        if broken:
            raise SymmetryBreakingError(f"State breaks the zero pattern: {broken}")

    return CorrelatorSet(
        m_x=expectation(state, pair(SIGMA_X)),
        m_x_next=expectation(state, pair(right=SIGMA_X)),
        c_x=expectation(state, pair(SIGMA_X, SIGMA_X)),
        c_y=expectation(state, pair(SIGMA_Y, SIGMA_Y)),
        c_z=expectation(state, pair(SIGMA_Z, SIGMA_Z)),
        provenance=Provenance.QUANTUM_EXACT,
        site=site,
    )


def two_site_rdm(state: QuantumState, site: int = 0) -> TwoSiteDensity:
    """Reduced density matrix of sites (site, site+1), in that order.

    Returns:
        A TwoSiteDensity with quantum-exact provenance.
    """
    nxt = _neighbour(state, site)
    M = state.num_sites
    rest = 2 ** (M - 2)

    if state.vector is not None:
        psi = np.moveaxis(state.vector.reshape((2,) * M), (site, nxt), (0, 1))
        amplitudes = psi.reshape(4, rest)
        rho = amplitudes @ amplitudes.conj().T
    else:
        tensor = state.density.reshape((2,) * (2 * M))
        tensor = np.moveaxis(tensor, (site, nxt, M + site, M + nxt), (0, 1, M, M + 1))
        rho = np.einsum("arbr->ab", tensor.reshape(4, rest, 4, rest))

    return TwoSiteDensity(matrix=rho, source=Provenance.QUANTUM_EXACT)
