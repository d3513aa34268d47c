"""Battery Hamiltonian construction and initial-state preparation.

The battery is an open-boundary transverse-field XY chain,

    H = (h/2) sum_j sigma_j^z
        + (J/4) sum_j [(1+g) sigma_j^x sigma_{j+1}^x + (1-g) sigma_j^y sigma_{j+1}^y],

with J = lambda * h and anisotropy g >= 0. Basis convention: sigma_z
eigenbasis with |0> the +1 eigenvector, tensor order site 1 (x) site 2
(x) ... (x) site N. Everything is dense; the dimension cap keeps runs
at desk scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_PLUS = 0.5 * (SIGMA_X + 1.0j * SIGMA_Y)
SIGMA_MINUS = 0.5 * (SIGMA_X - 1.0j * SIGMA_Y)
IDENTITY_2 = np.eye(2, dtype=complex)

DEFAULT_DIMENSION_CAP = 12
GROUND_DEGENERACY_GAP = 1e-12


class PhaseLabel(str, Enum):
    PARAMAGNETIC = "paramagnetic"
    ANTIFERROMAGNETIC = "antiferromagnetic"
    FERROMAGNETIC = "ferromagnetic"
    CRITICAL = "critical"


@dataclass(frozen=True)
class SpinChainParams:
    """Physical parameters of the battery chain.

    coupling_lambda is the dimensionless ratio J/h; the bare coupling is
    recovered as J = coupling_lambda * field_h.
    """

    n_sites: int
    coupling_lambda: float
    field_h: float = 1.0
    anisotropy_gamma: float = 1.0
    boundary: str = "open"

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("n_sites >= 2 required")
        if self.anisotropy_gamma < 0:
            raise ValueError("anisotropy_gamma >= 0 required")
        if self.field_h == 0:
            raise ValueError("field_h != 0 required (lambda undefined)")
        if self.boundary != "open":
            raise ValueError("only open boundary is supported")

    @property
    def coupling_j(self) -> float:
        return self.coupling_lambda * self.field_h

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites


@dataclass(frozen=True)
class NormalizedHamiltonian:
    """Hamiltonian affinely rescaled so its spectrum spans [0, 1].

    e0_raw and emax_raw are the extreme eigenvalues before rescaling;
    they fix the physical energy scale the normalization removed.
    """

    matrix: np.ndarray
    e0_raw: float
    emax_raw: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """Dense density matrix; Hermitian, unit trace, positive within tolerance."""

    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def violations(self, trace_tol: float = 1e-10, herm_tol: float = 1e-10,
                   positivity_tol: float = 1e-8) -> list[str]:
        """Return human-readable invariant violations (empty when valid)."""
        out = []
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > trace_tol:
            out.append(f"trace {tr:.3e} deviates from 1 beyond {trace_tol:.1e}")
        herm = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm > herm_tol:
            out.append(f"hermiticity defect {herm:.3e} beyond {herm_tol:.1e}")
        lo = float(np.linalg.eigvalsh(self.matrix)[0])
        if lo < -positivity_tol:
            out.append(f"minimum eigenvalue {lo:.3e} below -{positivity_tol:.1e}")
        return out

    def validate(self, trace_tol: float = 1e-10, herm_tol: float = 1e-10,
                 positivity_tol: float = 1e-8) -> None:
        bad = self.violations(trace_tol, herm_tol, positivity_tol)
        if bad:
            raise ValueError("invalid density matrix: " + "; ".join(bad))


@dataclass(frozen=True)
class TwoQubitClosedFormParams:
    """Amplitude ratio p and ground energy e0 of the two-qubit analytic family."""

    p: float
    e0: float


def site_operator(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-site operator at `site` (1-based) into the full chain."""
    if not 1 <= site <= n_sites:
        raise ValueError("invalid site")
    out = np.array([[1.0 + 0.0j]])
    for j in range(1, n_sites + 1):
        out = np.kron(out, op if j == site else IDENTITY_2)
    return out


def build_hamiltonian(params: SpinChainParams,
                      dim_cap: int = DEFAULT_DIMENSION_CAP) -> np.ndarray:
    """Assemble the dense chain Hamiltonian for the given parameters.

    The bond sum runs over j = 1..N-1 (open boundary). Raises on chains
    whose Hilbert-space dimension exceeds the configured cap.
    """
    n = params.n_sites
    if n > dim_cap:
        raise ValueError(
            f"dimension overflow: n_sites={n} exceeds cap {dim_cap} (2^{n} states)")
    h = params.field_h
    j_coupling = params.coupling_j
    g = params.anisotropy_gamma
    dim = params.dim
    ham = np.zeros((dim, dim), dtype=complex)
    for site in range(1, n + 1):
        ham += (h / 2.0) * site_operator(SIGMA_Z, site, n)
    for site in range(1, n):
        xx = site_operator(SIGMA_X, site, n) @ site_operator(SIGMA_X, site + 1, n)
        yy = site_operator(SIGMA_Y, site, n) @ site_operator(SIGMA_Y, site + 1, n)
        ham += (j_coupling / 4.0) * ((1.0 + g) * xx + (1.0 - g) * yy)
    return ham


def normalize_spectrum(hamiltonian: np.ndarray) -> NormalizedHamiltonian:
    """Rescale (H - e0) / (emax - e0) so the spectrum spans exactly [0, 1]."""
    evals = np.linalg.eigvalsh(hamiltonian)
    e0, emax = float(evals[0]), float(evals[-1])
    spread = emax - e0
    if spread < 1e-14:
        raise ValueError("degenerate spectrum: cannot normalize")
    matrix = (hamiltonian - e0 * np.eye(hamiltonian.shape[0])) / spread
    return NormalizedHamiltonian(matrix=matrix, e0_raw=e0, emax_raw=emax)


def ground_state(hamiltonian: np.ndarray) -> DensityMatrix:
    """Projector onto the lowest eigenvector.

    A degenerate ground space (gap below 1e-12) resolves to the lowest
    eigenvector index and emits a warning.
    """
    try:
        evals, evecs = np.linalg.eigh(hamiltonian)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError("eigensolver failure") from exc
    if len(evals) > 1 and evals[1] - evals[0] < GROUND_DEGENERACY_GAP:
        warnings.warn("degenerate ground space; picking lowest eigenvector index",
                      stacklevel=2)
    vec = evecs[:, 0]
    return DensityMatrix(matrix=np.outer(vec, vec.conj()))


def thermal_state(hamiltonian: np.ndarray, beta: float) -> DensityMatrix:
    """Canonical state exp(-beta H)/Z via eigendecomposition.

    Weights are shifted by the ground energy before exponentiation so
    arbitrarily large finite beta stays well-conditioned.
    """
    if beta < 0:
        raise ValueError("negative inverse temperature")
    evals, evecs = np.linalg.eigh(hamiltonian)
    weights = np.exp(-beta * (evals - evals[0]))
    weights /= weights.sum()
    matrix = (evecs * weights) @ evecs.conj().T
    return DensityMatrix(matrix=matrix)


def two_qubit_closed_form_ground(h: float, j_coupling: float,
                                 ) -> tuple[TwoQubitClosedFormParams, DensityMatrix]:
    """Two-qubit analytic initial state with p = 4(h+e0)/J, e0 = -sqrt(h^2+5J^2/8).

    The state is pure with support on the first and last basis vectors:
    diagonal corners p^2/(1+p^2) and 1/(1+p^2), antidiagonal corners
    p/(1+p^2). This parameterization anchors the closed-form work family
    (see the closed_form module) and is kept separate from the numerically
    diagonalized ground states used by the dynamics protocols.
    """
    if j_coupling == 0:
        raise ValueError("p undefined for J = 0")
    e0 = -np.sqrt(h * h + 5.0 * j_coupling * j_coupling / 8.0)
    p = 4.0 * (h + e0) / j_coupling
    a = 1.0 + p * p
    matrix = np.zeros((4, 4), dtype=complex)
    matrix[0, 0] = p * p / a
    matrix[3, 3] = 1.0 / a
    matrix[0, 3] = matrix[3, 0] = p / a
    return TwoQubitClosedFormParams(p=p, e0=e0), DensityMatrix(matrix=matrix)


def phase_label(coupling_lambda: float) -> PhaseLabel:
    """Classify the chain phase by lambda; |lambda| = 1 (to 1e-12) is critical."""
    if abs(abs(coupling_lambda) - 1.0) <= 1e-12:
        return PhaseLabel.CRITICAL
    if abs(coupling_lambda) < 1.0:
        return PhaseLabel.PARAMAGNETIC
    if coupling_lambda > 1.0:
        return PhaseLabel.ANTIFERROMAGNETIC
    return PhaseLabel.FERROMAGNETIC
