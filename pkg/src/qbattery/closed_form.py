"""Analytic two-qubit work family and its governing equations.

The reference setup is the two-qubit X-form Hamiltonian

    H_ref = [[ h, 0, 0, J/4],
             [ 0, 0, J/4, 0],
             [ 0, J/4, 0, 0],
             [J/4, 0, 0, -h]],

with the initial state parameterized by p = 4(h + e0)/J and
e0 = -sqrt(h^2 + 5 J^2 / 8) (see spin_model.two_qubit_closed_form_ground).
All quantities are treated as dimensionless numbers in units of h = 1.

Two variants of the element-wise equations of motion are provided:

* include_imaginary=True reconstitutes the complete commutator, giving the
  full master-equation generator (it agrees element-wise with
  dynamics.lindblad_generator).
* include_imaginary=False is the coherence-truncated real system in which
  the imaginary parts of the coherences are assumed to vanish and only the
  population coupling to the real corner coherences survives. The W_*
  closed forms below are the exact solutions of THIS system; the full
  equation deviates from them at second order in the transient (the
  imaginary feedback is genuinely nonzero). Their first-order transient
  slopes, however, are exact for the full equation as well, because the
  commutator cannot change Tr(H rho) instantaneously.

transient_advantage exposes those exact first-order slopes; the 0.89 and
0.62 coupling thresholds are their sign boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAMMA_ROUTING_FLOOR = 1e-10


def reference_hamiltonian(h: float, j_coupling: float) -> np.ndarray:
    """The 4x4 X-form Hamiltonian the analytic family is defined against."""
    ham = np.zeros((4, 4), dtype=complex)
    ham[0, 0], ham[3, 3] = h, -h
    for i, j in ((0, 3), (1, 2), (2, 1), (3, 0)):
        ham[i, j] = j_coupling / 4.0
    return ham


def _ground_params(h: float, j_coupling: float) -> tuple[float, float, float]:
    if j_coupling == 0:
        raise ValueError("p undefined for J = 0")
    e0 = -np.sqrt(h * h + 5.0 * j_coupling * j_coupling / 8.0)
    p = 4.0 * (h + e0) / j_coupling
    return p, e0, 1.0 + p * p


@dataclass(frozen=True)
class TwoQubitAnalyticInputs:
    """Parameter bundle of the analytic family with its derived constants."""

    h: float
    j_coupling: float
    gamma_abs: float = 0.0
    gamma_z: float = 0.0
    gamma_x: float = 0.0

    def __post_init__(self):
        if min(self.gamma_abs, self.gamma_z, self.gamma_x) < 0:
            raise ValueError("rates must be nonnegative")

    @property
    def p(self) -> float:
        return _ground_params(self.h, self.j_coupling)[0]

    @property
    def e0(self) -> float:
        return _ground_params(self.h, self.j_coupling)[1]

    @property
    def a(self) -> float:
        return 1.0 + self.p ** 2

    def b(self, t: float) -> float:
        return float(np.exp(-4.0 * t * self.gamma_z))

    def bit_flip_constants(self) -> tuple[float, float, float, float]:
        """(A', B', C', D') entering the bit-flip work expression."""
        h, j, p = self.h, self.j_coupling, self.p
        gab, gx = self.gamma_abs, self.gamma_x
        a_p = j * h * p * (gab + 2.0 * gx)
        b_p = 8.0 * h * gx * (gab + gx - p * p * gx)
        c_p = 4.0 * gab * h * gx * (1.0 + p * p)
        d_p = j * p * (gab + 2.0 * gx) * (2.0 * gx - h)
        return a_p, b_p, c_p, d_p


def W_noiseless(t, h: float, j_coupling: float, gamma_abs: float):
    """Stored energy Tr(H_ref rho_t) of the truncated system without dephasing."""
    p, _, a = _ground_params(h, j_coupling)
    t = np.asarray(t, dtype=float)
    value = h + np.exp(-t * gamma_abs) * (
        j_coupling * p - 2.0 * h * (2.0 + j_coupling * p * t)) / (2.0 * a)
    return value if value.ndim else float(value)


def W_phase_flip(t, h: float, j_coupling: float, gamma_abs: float,
                 gamma_z: float):
    """Stored energy under phase-flip dephasing at rate gamma_z.

    The gamma_z -> 0 singularity is removable; rates below 1e-10 route to
    the noiseless expression.
    """
    if gamma_z < 0:
        raise ValueError("gamma_z >= 0 required")
    if gamma_z < GAMMA_ROUTING_FLOOR:
        return W_noiseless(t, h, j_coupling, gamma_abs)
    p, _, a = _ground_params(h, j_coupling)
    t = np.asarray(t, dtype=float)
    b = np.exp(-4.0 * t * gamma_z)
    value = (np.exp(-t * gamma_abs) / (4.0 * gamma_z * a)) * (
        2.0 * j_coupling * p * b * gamma_z
        + h * (j_coupling * p * (b - 1.0)
               + 4.0 * gamma_z * (np.exp(t * gamma_abs) * a - 2.0)))
    return value if value.ndim else float(value)


def W_bit_flip(t, h: float, j_coupling: float, gamma_abs: float,
               gamma_x: float):
    """Stored energy under bit-flip dephasing at rate gamma_x."""
    if gamma_x < 0:
        raise ValueError("gamma_x >= 0 required")
    if gamma_x < GAMMA_ROUTING_FLOOR:
        return W_noiseless(t, h, j_coupling, gamma_abs)
    inputs = TwoQubitAnalyticInputs(h=h, j_coupling=j_coupling,
                                    gamma_abs=gamma_abs, gamma_x=gamma_x)
    a_p, b_p, c_p, d_p = inputs.bit_flip_constants()
    a = inputs.a
    t = np.asarray(t, dtype=float)
    prefactor = 1.0 / (4.0 * gamma_x * a * (gamma_abs + 2.0 * gamma_x))
    value = prefactor * np.exp(-t * (gamma_abs + 4.0 * gamma_x)) * (
        a_p - b_p * np.exp(2.0 * t * gamma_x)
        + np.exp(4.0 * t * gamma_x) * (c_p * np.exp(t * gamma_abs) + d_p))
    return value if value.ndim else float(value)


def transient_advantage(kind: str, gamma: float, h: float,
                        j_coupling: float) -> float:
    """First-order slope in t of the work difference driven by dephasing.

    kind selects the comparison: 'phase_flip' and 'bit_flip' are measured
    against the noiseless run, 'x_minus_z' is bit-flip minus phase-flip at
    equal rate gamma. These slopes are exact for the full equation.
    """
    if gamma < 0:
        raise ValueError("gamma >= 0 required")
    p, e0, a = _ground_params(h, j_coupling)
    lam = j_coupling / h
    if kind == "phase_flip":
        return -8.0 * gamma * (h + e0) / a
    if kind == "bit_flip":
        return 2.0 * h * gamma * (1.0 - p * p) / a
    if kind == "x_minus_z":
        return 2.0 * h * gamma * (1.0 + lam * p - p * p) / a
    raise ValueError(f"unknown advantage kind {kind!r}")


def threshold_bit_flip(lo: float = 0.1, hi: float = 2.0,
                       iterations: int = 200) -> float:
    """Coupling ratio where the bit-flip transient advantage changes sign."""
    return _bisect_sign(lambda lam: 1.0 - _ground_params(1.0, lam)[0] ** 2,
                        lo, hi, iterations)


def threshold_x_vs_z(lo: float = 0.1, hi: float = 2.0,
                     iterations: int = 200) -> float:
    """Coupling ratio where bit-flip stops beating phase-flip at first order."""

    def sign_fn(lam: float) -> float:
        p, _, _ = _ground_params(1.0, lam)
        return 1.0 + lam * p - p * p

    return _bisect_sign(sign_fn, lo, hi, iterations)


def _bisect_sign(fn, lo: float, hi: float, iterations: int) -> float:
    if fn(lo) <= 0 or fn(hi) >= 0:
        raise ValueError("sign change not bracketed")
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- element-wise equations of motion ---------------------------------------

def _dissipator_elements(rho: np.ndarray, direction: str, gamma_abs,
                         gamma_dph) -> np.ndarray:
    """Jump-channel part of d rho/dt, written element by element.

    Works on stacked (..., 4, 4) arrays; rates may broadcast over leading
    axes. Upper-triangle expressions follow the coupled-equation layout of
    the two-site system; the lower triangle mirrors them by conjugation.
    """
    r = rho
    out = np.zeros_like(r)
    gab, gd = gamma_abs, gamma_dph
    r11, r22, r33, r44 = r[..., 0, 0], r[..., 1, 1], r[..., 2, 2], r[..., 3, 3]
    r12, r13, r14 = r[..., 0, 1], r[..., 0, 2], r[..., 0, 3]
    r23, r24, r34 = r[..., 1, 2], r[..., 1, 3], r[..., 2, 3]
    r21, r31, r41 = r[..., 1, 0], r[..., 2, 0], r[..., 3, 0]
    r32, r42, r43 = r[..., 2, 1], r[..., 3, 1], r[..., 3, 2]
    if direction == "z":
        out[..., 0, 0] = gab * (r22 + r33)
        out[..., 1, 1] = gab * (-r22 + r44)
        out[..., 2, 2] = gab * (-r33 + r44)
        out[..., 3, 3] = -2.0 * gab * r44
        out[..., 0, 1] = -2.0 * gd * r12 + gab * (-0.5 * r12 + r34)
        out[..., 0, 2] = -2.0 * gd * r13 + gab * (-0.5 * r13 + r24)
        out[..., 0, 3] = (-gab - 4.0 * gd) * r14
        out[..., 1, 2] = (-gab - 4.0 * gd) * r23
        out[..., 1, 3] = (-1.5 * gab - 2.0 * gd) * r24
        out[..., 2, 3] = (-1.5 * gab - 2.0 * gd) * r34
    elif direction == "x":
        out[..., 0, 0] = gab * (r22 + r33) + gd * (r22 + r33 - 2.0 * r11)
        out[..., 1, 1] = gab * (-r22 + r44) + gd * (r11 + r44 - 2.0 * r22)
        out[..., 2, 2] = gab * (-r33 + r44) + gd * (r11 + r44 - 2.0 * r33)
        out[..., 3, 3] = -2.0 * gab * r44 + gd * (r22 + r33 - 2.0 * r44)
        out[..., 0, 1] = gab * (r34 - 0.5 * r12) + gd * (r34 - r12) + gd * (r21 - r12)
        out[..., 0, 2] = gab * (r24 - 0.5 * r13) + gd * (r24 - r13) + gd * (r31 - r13)
        out[..., 0, 3] = -gab * r14 + gd * (r23 + r32 - 2.0 * r14)
        out[..., 1, 2] = -gab * r23 + gd * (r14 + r41 - 2.0 * r23)
        out[..., 1, 3] = -1.5 * gab * r24 + gd * (r13 - r24) + gd * (r42 - r24)
        out[..., 2, 3] = -1.5 * gab * r34 + gd * (r12 - r34) + gd * (r43 - r34)
    else:
        raise ValueError("direction must be 'z' or 'x'")
    for i in range(4):
        for j in range(i + 1, 4):
            out[..., j, i] = np.conj(out[..., i, j])
    return out


def _commutator_elements(rho: np.ndarray, h: float, j_coupling: float
                         ) -> np.ndarray:
    """[H_ref, rho] using the X-matrix structure: diagonal field part plus a
    corner coupling that swaps indices 1<->4 and 2<->3."""
    diag = np.array([h, 0.0, 0.0, -h])
    swap = (3, 2, 1, 0)
    out = (diag[:, None] - diag[None, :]) * rho
    out += (j_coupling / 4.0) * (rho[..., swap, :] - rho[..., :, swap])
    return out


def appendix_ode_rhs(direction: str, rho: np.ndarray, h: float,
                     j_coupling: float, gamma_abs: float, gamma_dph: float,
                     include_imaginary: bool = True) -> np.ndarray:
    """Element-wise d rho/dt of the two-qubit system.

    With include_imaginary=True the complete commutator is included and the
    result equals the general Lindblad generator. With False the real
    truncated system is returned: only the population coupling
    -(J/2) rho14 / -(J/2) rho23 (and conjugate partners) survives from the
    commutator, which is the system the W_* closed forms solve exactly.
    """
    rho = np.asarray(rho)
    if rho.shape[-2:] != (4, 4):
        raise ValueError("expected a 4x4 state")
    out = _dissipator_elements(rho, direction, gamma_abs, gamma_dph)
    if include_imaginary:
        out = out.astype(complex)
        out += -1j * _commutator_elements(rho, h, j_coupling)
    else:
        half_j = 0.5 * j_coupling
        out[..., 0, 0] += -half_j * rho[..., 0, 3]
        out[..., 1, 1] += -half_j * rho[..., 1, 2]
        out[..., 2, 2] += half_j * rho[..., 1, 2]
        out[..., 3, 3] += half_j * rho[..., 0, 3]
    return out


def reference_energy(rho: np.ndarray, h: float, j_coupling: float) -> np.ndarray:
    """Tr(H_ref rho) for stacked (..., 4, 4) states."""
    corners = rho[..., 0, 3] + rho[..., 3, 0] + rho[..., 1, 2] + rho[..., 2, 1]
    return np.real(h * (rho[..., 0, 0] - rho[..., 3, 3])
                   + (j_coupling / 4.0) * corners)


def initial_state_matrix(h: float, j_coupling: float) -> np.ndarray:
    """The analytic family's initial state as a plain array."""
    p, _, a = _ground_params(h, j_coupling)
    rho = np.zeros((4, 4))
    rho[0, 0] = p * p / a
    rho[3, 3] = 1.0 / a
    rho[0, 3] = rho[3, 0] = p / a
    return rho


def integrate_appendix_system(direction: str, t_max: float, h: float,
                              j_coupling: float, gamma_abs: float,
                              gamma_dph: float, include_imaginary: bool = True,
                              dt: float = 1e-3, record_every: int = 100,
                              rho0: np.ndarray | None = None
                              ) -> tuple[np.ndarray, np.ndarray]:
    """RK4 integration of either ODE variant; returns (times, Tr(H_ref rho_t)).

    Starts from the analytic family's initial state unless rho0 is given.
    """
    if rho0 is None:
        rho0 = initial_state_matrix(h, j_coupling)
    rho = rho0.astype(complex if include_imaginary else float).copy()

    def rhs(state):
        return appendix_ode_rhs(direction, state, h, j_coupling, gamma_abs,
                                gamma_dph, include_imaginary)

    n_steps = max(1, int(round(t_max / dt)))
    rec = list(range(0, n_steps + 1, record_every))
    if rec[-1] != n_steps:
        rec.append(n_steps)
    times = np.array([i * dt for i in rec])
    energies = [reference_energy(rho, h, j_coupling)]
    slot = 1
    for step in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if slot < len(rec) and step == rec[slot]:
            energies.append(reference_energy(rho, h, j_coupling))
            slot += 1
    return times, np.array(energies)


def closed_form_energy(direction: str, t, h: float, j_coupling: float,
                       gamma_abs: float, gamma_dph: float):
    """Dispatch W_* by dephasing direction ('none', 'z' or 'x')."""
    if direction == "none" or gamma_dph < GAMMA_ROUTING_FLOOR:
        return W_noiseless(t, h, j_coupling, gamma_abs)
    if direction == "z":
        return W_phase_flip(t, h, j_coupling, gamma_abs, gamma_dph)
    if direction == "x":
        return W_bit_flip(t, h, j_coupling, gamma_abs, gamma_dph)
    raise ValueError("direction must be 'none', 'z' or 'x'")


# -- linear-map form of the two-qubit systems --------------------------------
#
# Both ODE variants are linear in rho, so grid-level oracle sweeps integrate
# them as 16x16 real systems acting on the component vector
# [diagonal (4), Re upper triangle (6), Im upper triangle (6)].

_UPPER = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def hermitian_to_vector(rho: np.ndarray) -> np.ndarray:
    """Real component vector of a Hermitian 4x4 matrix (stackable)."""
    parts = [rho[..., i, i].real for i in range(4)]
    parts += [rho[..., i, j].real for i, j in _UPPER]
    parts += [rho[..., i, j].imag for i, j in _UPPER]
    return np.stack(parts, axis=-1)


def vector_to_hermitian(vec: np.ndarray) -> np.ndarray:
    """Inverse of hermitian_to_vector."""
    vec = np.asarray(vec)
    rho = np.zeros(vec.shape[:-1] + (4, 4), dtype=complex)
    for i in range(4):
        rho[..., i, i] = vec[..., i]
    for k, (i, j) in enumerate(_UPPER):
        value = vec[..., 4 + k] + 1j * vec[..., 10 + k]
        rho[..., i, j] = value
        rho[..., j, i] = np.conj(value)
    return rho


def appendix_system_matrix(direction: str, h: float, j_coupling: float,
                           gamma_abs: float, gamma_dph: float,
                           include_imaginary: bool = True) -> np.ndarray:
    """16x16 real matrix of either ODE variant on the component vector.

    The truncated variant never populates imaginary components (they are
    exactly zero along its trajectories), so its imaginary columns are
    dropped to zero.
    """
    matrix = np.zeros((16, 16))
    n_cols = 16 if include_imaginary else 10
    for col in range(n_cols):
        basis = np.zeros(16)
        basis[col] = 1.0
        rho = vector_to_hermitian(basis)
        if not include_imaginary:
            rho = rho.real
        deriv = appendix_ode_rhs(direction, rho, h, j_coupling, gamma_abs,
                                 gamma_dph, include_imaginary)
        matrix[:, col] = hermitian_to_vector(deriv.astype(complex))
    return matrix


def integrate_linear_systems(matrices: np.ndarray, v0: np.ndarray,
                             t_max: float, dt: float = 1e-3,
                             record_every: int = 100
                             ) -> tuple[np.ndarray, np.ndarray]:
    """RK4 on a batch of linear systems dv/dt = M v; returns (times, (R, B, 16))."""
    mats = matrices if matrices.ndim == 3 else matrices[None]
    vec = (v0 if v0.ndim == 2 else v0[None]).astype(float).copy()
    n_steps = max(1, int(round(t_max / dt)))
    rec = list(range(0, n_steps + 1, record_every))
    if rec[-1] != n_steps:
        rec.append(n_steps)
    times = np.array([i * dt for i in rec])
    records = np.empty((len(rec), vec.shape[0], 16))
    records[0] = vec
    slot = 1
    for step in range(1, n_steps + 1):
        k1 = np.einsum("bij,bj->bi", mats, vec)
        k2 = np.einsum("bij,bj->bi", mats, vec + 0.5 * dt * k1)
        k3 = np.einsum("bij,bj->bi", mats, vec + 0.5 * dt * k2)
        k4 = np.einsum("bij,bj->bi", mats, vec + dt * k3)
        vec = vec + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if slot < len(rec) and step == rec[slot]:
            records[slot] = vec
            slot += 1
    return times, records
