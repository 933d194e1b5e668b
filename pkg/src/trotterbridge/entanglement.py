"""Two-site density matrices and two-qubit entanglement measures.

The density matrix of a neighbouring pair is fixed by the correlators
{m_x, c_x, c_y, c_z}, so correlators measured on the classical lattice are
enough to decide whether the quantum pair is entangled.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import BridgeNumericError, BridgeValidationError
from .spinchain_exact import (
    IDENTITY,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    CorrelatorSet,
    InvalidDensityError,
    Provenance,
    TwoSiteDensity,
)

logger = logging.getLogger(__name__)

EXACT_EIGEN_TOL = 1e-9
ENTANGLED_TOL = 1e-12
DERIVATIVE_STEP = 1e-6

SIGMA_YY = np.kron(SIGMA_Y, SIGMA_Y)


class EntanglementError(Exception):
    """Marker base for entanglement errors."""

    module = "entanglement"


class InconsistentCorrelatorsError(EntanglementError, BridgeNumericError):
    """Correlators do not describe a physical two-qubit state."""


@dataclass(frozen=True)
class EntanglementReport:
    concurrence: float
    negativity: float
    entangled: bool
    repair_applied: bool
    source: Provenance
    concurrence_err: float = 0.0
    negativity_err: float = 0.0

    def to_dict(self) -> dict:
        return {
            "concurrence": self.concurrence,
            "negativity": self.negativity,
            "entangled": self.entangled,
            "repair_applied": self.repair_applied,
            "source": self.source.value,
            "concurrence_err": self.concurrence_err,
            "negativity_err": self.negativity_err,
        }


def _pauli_expansion(m_x: float, m_x_next: float, c_x: float, c_y: float, c_z: float) -> np.ndarray:
    return 0.25 * (
        np.kron(IDENTITY, IDENTITY)
        + m_x * np.kron(SIGMA_X, IDENTITY)
        + m_x_next * np.kron(IDENTITY, SIGMA_X)
        + c_x * np.kron(SIGMA_X, SIGMA_X)
        + c_y * SIGMA_YY
        + c_z * np.kron(SIGMA_Z, SIGMA_Z)
    )


def _project_psd(matrix: np.ndarray) -> np.ndarray:
    """Nearest PSD matrix of unit trace: clip negative eigenvalues and renormalise."""
    values, vectors = np.linalg.eigh(matrix)
    values = np.clip(values, 0.0, None)
    projected = (vectors * values) @ vectors.conj().T
    return projected / np.trace(projected).real


def _tolerance(c: CorrelatorSet) -> float:
    """Eigenvalue slack allowed by the statistical and Trotter errors of the set."""
    s_m, s_x, s_y, s_z = c.uncertainty()
    return max(3 * 0.25 * (2 * s_m + s_x + s_y + s_z), EXACT_EIGEN_TOL)


def _clamped(c: CorrelatorSet) -> dict[str, float]:
    errors = dict(zip(("m_x", "c_x", "c_y", "c_z"), c.uncertainty()))
    errors["m_x_next"] = errors["m_x"]

    values = {}
    for name, value in c.values().items():
        excess = abs(value) - 1
        if excess > 0:
            if excess > EXACT_EIGEN_TOL:
                if excess >= 3 * errors[name]:
                    raise InconsistentCorrelatorsError(
                        f"{name} = {value} lies outside [-1, 1] by more than 3 standard errors"
                    )
                logger.warning("Clamping %s = %.6g to [-1, 1]", name, value)
            value = math.copysign(1.0, value)
        values[name] = value
    return values


def rdm_from_correlators(c: CorrelatorSet) -> TwoSiteDensity:
    """Rebuild the pair density matrix from its Pauli expansion.

    rho = 1/4 [I + m_x sx.I + m_x' I.sx + c_x sx.sx + c_y sy.sy + c_z sz.sz]

    The tolerance is three times the eigenvalue shift the set's uncertainty
    (statistical plus Trotter error) can cause, and at least 1e-9. Any negative
    eigenvalue above minus the tolerance is repaired by projection and flagged
    on the result.

    Raises:
        InconsistentCorrelatorsError: If an eigenvalue falls below minus the tolerance.
    """
    rho = _pauli_expansion(**_clamped(c))
    tolerance = _tolerance(c)

    smallest = float(np.linalg.eigvalsh(rho).min())
    if smallest < -tolerance:
        raise InconsistentCorrelatorsError(
            f"Reconstructed density has eigenvalue {smallest:.3g} below -{tolerance:.3g}; "
            f"check the estimator or the Trotter number"
        )
    repaired = smallest < 0
    if repaired:
        log = logger.warning if smallest < -EXACT_EIGEN_TOL else logger.debug
        log("Repairing density matrix with eigenvalue %.3g", smallest)
        rho = _project_psd(rho)
    return TwoSiteDensity(matrix=rho, source=c.provenance, repaired=repaired)


def partial_transpose(matrix: np.ndarray) -> np.ndarray:
    """Partial transpose over the second site."""
    return np.asarray(matrix).reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


def _negativity(matrix: np.ndarray) -> float:
    values = np.linalg.eigvalsh(partial_transpose(matrix))
    return float(-values[values < 0].sum())


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.conj().T


def _concurrence(matrix: np.ndarray) -> float:
    flipped = SIGMA_YY @ matrix.conj() @ SIGMA_YY
    # singular values of sqrt(rho) sqrt(rho~) are the square roots of eig(rho rho~)
    lambdas = np.linalg.svd(_psd_sqrt(matrix) @ _psd_sqrt(flipped), compute_uv=False)
    lambdas = np.sort(lambdas)[::-1]
    return float(max(0.0, lambdas[0] - lambdas[1:].sum()))


def negativity(rho: TwoSiteDensity) -> float:
    """Sum of |negative eigenvalues| of the partial transpose (Bell state: 0.5)."""
    return _negativity(rho.matrix)


def concurrence(rho: TwoSiteDensity) -> float:
    """Wootters concurrence max(0, l1 - l2 - l3 - l4)."""
    return _concurrence(rho.matrix)


def _delta_method(c: CorrelatorSet) -> tuple[float, float]:
    """First-order errors of (concurrence, negativity) from the correlator uncertainties."""
    base = _clamped(c)
    uncertainty = c.uncertainty()
    groups = {
        0: ("m_x", "m_x_next"),
        1: ("c_x",),
        2: ("c_y",),
        3: ("c_z",),
    }
    variance = np.zeros(2)
    for index, names in groups.items():
        sigma = uncertainty[index]
        if sigma == 0:
            continue
        measures = []
        for sign in (1, -1):
            shifted = dict(base)
            for name in names:
                shifted[name] = base[name] + sign * DERIVATIVE_STEP
            rho = _project_psd(_pauli_expansion(**shifted))
            measures.append(np.array([_concurrence(rho), _negativity(rho)]))
        gradient = (measures[0] - measures[1]) / (2 * DERIVATIVE_STEP)
        variance += (gradient * sigma) ** 2
    return float(math.sqrt(variance[0])), float(math.sqrt(variance[1]))


def entanglement_report(c: CorrelatorSet) -> EntanglementReport:
    """Reconstruct the pair density and evaluate both measures.

    Sets with statistical or Trotter errors also get delta-method error bars.
    """
    rho = rdm_from_correlators(c)
    neg = negativity(rho)
    conc = concurrence(rho)
    conc_err, neg_err = _delta_method(c) if any(c.uncertainty()) else (0.0, 0.0)

    return EntanglementReport(
        concurrence=conc,
        negativity=neg,
        entangled=neg > ENTANGLED_TOL,
        repair_applied=rho.repaired,
        source=c.provenance,
        concurrence_err=conc_err,
        negativity_err=neg_err,
    )


def bell_state() -> TwoSiteDensity:
    """Projector on (|00> + |11>)/sqrt(2)."""
    psi = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    return TwoSiteDensity(np.outer(psi, psi.conj()), Provenance.QUANTUM_EXACT)


def mix_with_identity(rho: TwoSiteDensity, q: float) -> TwoSiteDensity:
    """(1 - q) rho + q I/4."""
    if not 0 <= q <= 1:
        raise BridgeValidationError(f"Mixing weight must lie in [0, 1], got {q}")
    return TwoSiteDensity((1 - q) * rho.matrix + q * np.eye(4) / 4, rho.source)


def werner_state(p: float) -> TwoSiteDensity:
    """p |Bell><Bell| + (1 - p) I/4; entangled for p > 1/3."""
    return mix_with_identity(bell_state(), 1 - p)
