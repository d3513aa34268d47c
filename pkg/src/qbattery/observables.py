"""Work, instantaneous power, reduced states, and logarithmic negativity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory
from .spin_model import DensityMatrix


@dataclass(frozen=True)
class WorkSeries:
    """Stored work W(t) = Tr(H rho_t) - Tr(H rho_0) on the recorded grid."""

    times: np.ndarray
    work: np.ndarray
    power: np.ndarray | None = None


@dataclass(frozen=True)
class EntanglementSeries:
    times: np.ndarray
    log_negativity: np.ndarray


def work(traj: Trajectory, hamiltonian: np.ndarray) -> WorkSeries:
    """Energy gained relative to the initial state, per recorded time."""
    energies = np.empty(len(traj.times))
    for i, state in enumerate(traj.states):
        value = np.trace(hamiltonian @ state.matrix)
        if abs(value.imag) > 1e-8:
            raise ValueError(f"non-physical state: Im Tr(H rho) = {value.imag:.3e}")
        energies[i] = value.real
    return WorkSeries(times=traj.times, work=energies - energies[0])


def work_from_energies(times: np.ndarray, energies: np.ndarray) -> WorkSeries:
    """Work series from a precomputed Tr(H rho_t) sequence (batched runs)."""
    return WorkSeries(times=np.asarray(times), work=np.asarray(energies) - energies[0])


def instantaneous_power(series: WorkSeries) -> WorkSeries:
    """|dW/dt| by central differences (one-sided at the ends) on a uniform grid."""
    if len(series.times) < 3:
        raise ValueError("grid error: need at least 3 samples")
    steps = np.diff(series.times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
        raise ValueError("grid error: non-uniform time grid")
    power = np.abs(np.gradient(series.work, series.times))
    return WorkSeries(times=series.times, work=series.work, power=power)


def reduced_state(rho: DensityMatrix, keep: tuple[int, int]) -> DensityMatrix:
    """Partial trace keeping the two listed sites (1-based), in the given order."""
    n = int(round(np.log2(rho.dim)))
    if 2 ** n != rho.dim:
        raise ValueError("state dimension is not a power of two")
    a, b = keep
    if a == b or not (1 <= a <= n and 1 <= b <= n):
        raise ValueError("invalid site")
    tensor = rho.matrix.reshape([2] * (2 * n))
    # move kept ket axes to the front, matching bra axes right after
    ket = [a - 1, b - 1] + [j for j in range(n) if j not in (a - 1, b - 1)]
    perm = ket + [n + j for j in ket]
    tensor = tensor.transpose(perm).reshape(4, 2 ** (n - 2), 4, 2 ** (n - 2))
    reduced = np.einsum("ikjk->ij", tensor)
    return DensityMatrix(matrix=reduced)


def log_negativity(rho: DensityMatrix) -> float:
    """log2 of the trace norm of the partial transpose (second qubit) of a
    two-qubit state; values below 1e-12 are clipped to zero."""
    if rho.dim != 4:
        raise ValueError("log_negativity expects a two-qubit state")
    pt = rho.matrix.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    trace_norm = float(np.abs(np.linalg.eigvalsh(pt)).sum())
    value = np.log2(trace_norm)
    return float(value) if value > 1e-12 else 0.0


def entanglement_series(traj: Trajectory, pair: tuple[int, int] = (1, 2)
                        ) -> EntanglementSeries:
    """Nearest-neighbor (by default) log-negativity along a trajectory."""
    values = np.array([log_negativity(reduced_state(state, pair))
                       for state in traj.states])
    return EntanglementSeries(times=traj.times, log_negativity=values)
