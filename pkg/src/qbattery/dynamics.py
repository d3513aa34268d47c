"""Fixed-step integration of the (possibly time-dependent) Lindblad equation.

The generator is

    d rho / dt = -i [H, rho] + sum_k g_k(t) (L_k rho L_k^† - {L_k^† L_k, rho} / 2),

integrated with classical fourth-order Runge-Kutta. Every jump operator
here is a single-site Pauli-type operator, so each sandwich L rho L^† is
an index permutation of rho with a sign/occupation mask; the hot loop
exploits that instead of forming dense operator products. The public
`lindblad_generator` keeps the plain matrix-product form and doubles as
the reference the fast path is tested against.

Batched evolution integrates many runs that share a channel skeleton
(same sites and kinds, per-run rate multipliers) in one vectorized loop;
parameter sweeps reduce to a single integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channels import (ChannelSet, ConstantRate, JumpKind, OhmicSchedule,
                       jump_operator, rate_at)
from .spin_model import DensityMatrix


class IntegratorDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    step_dt: float = 1e-3
    t_max: float = 4.0
    record_every: int = 100
    positivity_tol: float = 1e-8
    trace_tol: float = 1e-9

    def __post_init__(self):
        if self.step_dt <= 0:
            raise ValueError("step_dt > 0 required")
        if self.t_max <= 0:
            raise ValueError("t_max > 0 required")
        if self.record_every < 1:
            raise ValueError("record_every >= 1 required")

    def n_steps(self) -> int:
        return max(1, int(round(self.t_max / self.step_dt)))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple[DensityMatrix, ...]
    metadata: dict

    def state_matrices(self) -> np.ndarray:
        return np.stack([s.matrix for s in self.states])


def lindblad_generator(rho: np.ndarray, hamiltonian: np.ndarray,
                       channels: ChannelSet, t: float = 0.0) -> np.ndarray:
    """Right-hand side of the master equation in plain matrix-product form."""
    if rho.shape != hamiltonian.shape or rho.shape[0] != rho.shape[1]:
        raise ValueError("shape error: rho and H must be equal square matrices")
    if rho.shape[0] != 2 ** channels.n_sites:
        raise ValueError("shape error: channel set dimension mismatch")
    out = -1j * (hamiltonian @ rho - rho @ hamiltonian)
    for entry in channels.entries:
        g = rate_at(entry.schedule, t)
        jump = jump_operator(entry.site, entry.kind, channels.n_sites)
        jd = jump.conj().T
        jdj = jd @ jump
        out += g * (jump @ rho @ jd - 0.5 * (jdj @ rho + rho @ jdj))
    return out


# -- compiled channel structure -------------------------------------------

def _site_bit(site: int, n_sites: int, dim: int) -> np.ndarray:
    """Occupation bit of `site` for every basis index (site 1 = leading factor)."""
    return (np.arange(dim) >> (n_sites - site)) & 1


def _sandwich_arrays(site: int, kind: JumpKind, n_sites: int):
    """(flat gather index, elementwise mask, diag of L^†L) for L rho L^†."""
    dim = 2 ** n_sites
    mask_bit = 1 << (n_sites - site)
    a = np.arange(dim)
    bit = _site_bit(site, n_sites, dim)
    if kind is JumpKind.ABSORPTION:
        src = a | mask_bit
        keep = (1 - bit).astype(float)
        mask = np.outer(keep, keep)
        ltl = bit.astype(float)
    elif kind is JumpKind.DISSIPATION:
        src = a & ~mask_bit
        keep = bit.astype(float)
        mask = np.outer(keep, keep)
        ltl = (1 - bit).astype(float)
    elif kind is JumpKind.DEPHASE_Z:
        src = a
        phase = 1.0 - 2.0 * bit
        mask = np.outer(phase, phase)
        ltl = np.ones(dim)
    else:  # DEPHASE_X
        src = a ^ mask_bit
        mask = np.ones((dim, dim))
        ltl = np.ones(dim)
    idx = (src[:, None] * dim + src[None, :]).ravel()
    return idx, mask, ltl


@dataclass
class _CompiledChannels:
    """Vectorized gather/mask form of a channel skeleton for a batch of runs."""

    dim: int
    const_idx: np.ndarray | None          # (C, d*d)
    const_masks: np.ndarray | None        # (C, d, d)
    const_anti: np.ndarray | None         # (B, d, d): (K_i + K_j)/2, rate-weighted
    tdep_groups: list = field(default_factory=list)
    # each: (schedule, idx (K, d*d), masks (K, d, d), scale (B, K, 1, 1), anti (B, d, d))

    def rhs(self, t: float, rho: np.ndarray, hamiltonians: np.ndarray) -> np.ndarray:
        hr = hamiltonians @ rho
        out = -1j * (hr - hr.conj().transpose(0, 2, 1))
        flat = rho.reshape(rho.shape[0], -1)
        if self.const_idx is not None:
            gathered = flat[:, self.const_idx].reshape(
                rho.shape[0], -1, self.dim, self.dim)
            out += (gathered * self.const_masks).sum(axis=1)
            out -= self.const_anti * rho
        for schedule, idx, masks, scale, anti in self.tdep_groups:
            g = rate_at(schedule, t)
            gathered = flat[:, idx].reshape(rho.shape[0], -1, self.dim, self.dim)
            out += g * (scale * gathered * masks).sum(axis=1)
            out -= g * (anti * rho)
        return out


def _compile_channels(template: ChannelSet, rate_scale: np.ndarray,
                      dim: int) -> _CompiledChannels:
    n_runs = rate_scale.shape[0]
    const_parts, tdep_parts = [], {}
    for col, entry in enumerate(template.entries):
        idx, mask, ltl = _sandwich_arrays(entry.site, entry.kind, template.n_sites)
        scale = rate_scale[:, col]
        if isinstance(entry.schedule, ConstantRate):
            const_parts.append((idx, mask, ltl, entry.schedule.rate * scale))
        else:
            tdep_parts.setdefault(entry.schedule, []).append((idx, mask, ltl, scale))
    comp = _CompiledChannels(dim=dim, const_idx=None, const_masks=None,
                             const_anti=None)
    if const_parts:
        rates = np.stack([p[3] for p in const_parts], axis=1)       # (B, C)
        masks = np.stack([p[1] for p in const_parts])               # (C, d, d)
        comp.const_idx = np.stack([p[0] for p in const_parts])
        comp.const_masks = rates[:, :, None, None] * masks
        kdiag = np.einsum("bc,cd->bd", rates, np.stack([p[2] for p in const_parts]))
        comp.const_anti = 0.5 * (kdiag[:, :, None] + kdiag[:, None, :])
    for schedule, parts in tdep_parts.items():
        idx = np.stack([p[0] for p in parts])
        masks = np.stack([p[1] for p in parts])
        scale = np.stack([p[3] for p in parts], axis=1)             # (B, K)
        kdiag = np.einsum("bk,kd->bd", scale, np.stack([p[2] for p in parts]))
        anti = 0.5 * (kdiag[:, :, None] + kdiag[:, None, :])
        comp.tdep_groups.append(
            (schedule, idx, masks, scale[:, :, None, None], anti))
    return comp


# -- integration -----------------------------------------------------------

@dataclass
class BatchResult:
    times: np.ndarray                 # (R,)
    states: np.ndarray                # (R, B, d, d) recorded density matrices
    warnings: list[str]


def evolve_batch(hamiltonians: np.ndarray, rho0: np.ndarray, template: ChannelSet,
                 rate_scale: np.ndarray, cfg: IntegratorConfig,
                 positivity_strict: bool | None = None) -> BatchResult:
    """Integrate a batch of runs sharing one channel skeleton.

    `rate_scale[b, c]` multiplies the scheduled rate of template entry c in
    run b (0 switches the channel off), so count hierarchies and rate grids
    integrate as a single vectorized loop. Hamiltonians and initial states
    are stacked along the leading axis.
    """
    hams = np.ascontiguousarray(hamiltonians.astype(complex))
    rho = np.ascontiguousarray(rho0.astype(complex))
    if hams.ndim == 2:
        hams = hams[None]
    if rho.ndim == 2:
        rho = rho[None]
    n_runs, dim = rho.shape[0], rho.shape[-1]
    if hams.shape != rho.shape:
        raise ValueError("shape error: batched H and rho0 must match")
    rate_scale = np.atleast_2d(np.asarray(rate_scale, dtype=float))
    if rate_scale.shape != (n_runs, len(template.entries)):
        raise ValueError("shape error: rate_scale must be (n_runs, n_entries)")
    comp = _compile_channels(template, rate_scale, dim)
    if positivity_strict is None:
        positivity_strict = not template.has_negative_rate_window()

    dt = cfg.step_dt
    n_steps = cfg.n_steps()
    rec_idx = list(range(0, n_steps + 1, cfg.record_every))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    times = np.array([i * dt for i in rec_idx])
    records = np.empty((len(rec_idx), n_runs, dim, dim), dtype=complex)
    warnings_log: list[str] = []

    def check_record(slot: int, step: int):
        records[slot] = rho
        eigmin = np.linalg.eigvalsh(rho).min(axis=1)
        for b in np.nonzero(eigmin < -cfg.positivity_tol)[0]:
            msg = (f"run {b}: min eigenvalue {eigmin[b]:.3e} below "
                   f"-{cfg.positivity_tol:.1e} at t={step * dt:g}")
            if positivity_strict and eigmin[b] < -100.0 * cfg.positivity_tol:
                raise IntegratorDivergenceError(
                    "integrator divergence (reduce step_dt): " + msg)
            warnings_log.append(msg)

    check_record(0, 0)
    slot = 1
    for step in range(1, n_steps + 1):
        t = (step - 1) * dt
        k1 = comp.rhs(t, rho, hams)
        k2 = comp.rhs(t + 0.5 * dt, rho + (0.5 * dt) * k1, hams)
        k3 = comp.rhs(t + 0.5 * dt, rho + (0.5 * dt) * k2, hams)
        k4 = comp.rhs(t + dt, rho + dt * k3, hams)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().transpose(0, 2, 1))
        traces = np.einsum("bii->b", rho).real
        drift = np.abs(traces - 1.0)
        if drift.max() > cfg.trace_tol:
            b = int(drift.argmax())
            raise IntegratorDivergenceError(
                f"integrator divergence (reduce step_dt): run {b} trace drift "
                f"{drift[b]:.3e} at t={step * dt:g}")
        rho /= traces[:, None, None]
        if slot < len(rec_idx) and step == rec_idx[slot]:
            check_record(slot, step)
            slot += 1
    return BatchResult(times=times, states=records, warnings=warnings_log)


def evolve(rho0: DensityMatrix, hamiltonian: np.ndarray, channels: ChannelSet,
           cfg: IntegratorConfig) -> Trajectory:
    """Integrate a single run and return the recorded trajectory."""
    rho0.validate(trace_tol=1e-8, herm_tol=1e-8, positivity_tol=cfg.positivity_tol)
    scale = np.ones((1, len(channels.entries)))
    result = evolve_batch(hamiltonian[None], rho0.matrix[None], channels, scale, cfg)
    states = tuple(DensityMatrix(matrix=result.states[i, 0])
                   for i in range(result.states.shape[0]))
    metadata = {
        "channels": channels,
        "integrator": cfg,
        "warnings": result.warnings,
    }
    return Trajectory(times=result.times, states=states, metadata=metadata)


def energy_series(result: BatchResult, hamiltonians: np.ndarray) -> np.ndarray:
    """Tr(H rho_t) for every run and recorded time; shape (B, R)."""
    hams = hamiltonians if hamiltonians.ndim == 3 else hamiltonians[None]
    return np.einsum("rbij,bji->br", result.states, hams).real


def detect_steady_state(traj: Trajectory, hamiltonian: np.ndarray,
                        eps: float) -> float | None:
    """Earliest recorded time from which |dW/dt| stays below eps."""
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    energies = np.array([np.trace(hamiltonian @ s.matrix).real for s in traj.states])
    if len(energies) < 3:
        return traj.times[0] if np.ptp(energies) < eps else None
    power = np.abs(np.gradient(energies, traj.times))
    above = np.nonzero(power >= eps)[0]
    if len(above) == 0:
        return float(traj.times[0])
    if above[-1] == len(power) - 1:
        return None
    return float(traj.times[above[-1] + 1])
