"""Local jump operators and their rate schedules.

Four local channels act on individual spins: absorption (sigma+),
dissipation (sigma-), and dephasing along z or x. Rates are either
constant (memoryless dynamics) or follow the Ohmic dephasing schedule

    rate(t) = (1 + (w_c t)^2)^(-s/2) * Gamma(s) * sin(s * arctan(w_c t)),

which turns temporarily negative for Ohmicity s > 2 (information
back-flow regime).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .spin_model import SIGMA_MINUS, SIGMA_PLUS, SIGMA_X, SIGMA_Z, site_operator


class JumpKind(Enum):
    ABSORPTION = "absorption"
    DISSIPATION = "dissipation"
    DEPHASE_Z = "dephase_z"
    DEPHASE_X = "dephase_x"


_SINGLE_SITE = {
    JumpKind.ABSORPTION: SIGMA_PLUS,
    JumpKind.DISSIPATION: SIGMA_MINUS,
    JumpKind.DEPHASE_Z: SIGMA_Z,
    JumpKind.DEPHASE_X: SIGMA_X,
}

_DEPHASING_KINDS = (JumpKind.DEPHASE_Z, JumpKind.DEPHASE_X)


@dataclass(frozen=True)
class ConstantRate:
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("constant rate >= 0 required")


@dataclass(frozen=True)
class OhmicSchedule:
    s: float
    omega_c: float = 1.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("ohmic s > 0 required")
        if self.omega_c <= 0:
            raise ValueError("ohmic omega_c > 0 required")


RateSchedule = Union[ConstantRate, OhmicSchedule]


@dataclass(frozen=True)
class ChannelEntry:
    site: int
    kind: JumpKind
    schedule: RateSchedule


@dataclass(frozen=True)
class ChannelSet:
    """All jump channels of one run; at most one dephasing direction per site."""

    n_sites: int
    entries: tuple[ChannelEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        seen_dephasing = set()
        for entry in self.entries:
            if not 1 <= entry.site <= self.n_sites:
                raise ValueError(f"invalid site {entry.site} (1..{self.n_sites})")
            if entry.kind in _DEPHASING_KINDS:
                if entry.site in seen_dephasing:
                    raise ValueError(
                        f"site {entry.site} carries more than one dephasing entry")
                seen_dephasing.add(entry.site)

    def has_negative_rate_window(self) -> bool:
        """True when any schedule can go instantaneously negative (s > 2)."""
        return any(isinstance(e.schedule, OhmicSchedule) and is_non_markovian(e.schedule.s)
                   for e in self.entries)


def jump_operator(site: int, kind: JumpKind, n_sites: int) -> np.ndarray:
    """Full-chain jump operator: identity everywhere except `site`."""
    return site_operator(_SINGLE_SITE[kind], site, n_sites)


def ohmic_spectral_density(omega: float, s: float, omega_c: float) -> float:
    """G(w) = (w^s / w_c^(s-1)) * exp(-w / w_c)."""
    return (omega ** s / omega_c ** (s - 1.0)) * math.exp(-omega / omega_c)


def ohmic_dephasing_rate(t: float, s: float, omega_c: float = 1.0) -> float:
    """Time-local dephasing rate of the Ohmic reservoir; negative windows for s > 2."""
    x = omega_c * t
    return (1.0 + x * x) ** (-s / 2.0) * math.gamma(s) * math.sin(s * math.atan(x))


def is_non_markovian(s: float) -> bool:
    """Negative-rate windows exist iff s > 2; the boundary counts as Markovian."""
    if s <= 0:
        raise ValueError("ohmic s > 0 required")
    return s > 2.0


def rate_at(schedule: RateSchedule, t: float) -> float:
    if isinstance(schedule, ConstantRate):
        return schedule.rate
    return ohmic_dephasing_rate(t, schedule.s, schedule.omega_c)


def charging_channels(n_sites: int, rate_abs: float, dephasing_sites: tuple[int, ...],
                      dephasing_kind: JumpKind | None,
                      dephasing_schedule: RateSchedule | None) -> ChannelSet:
    """Absorption on every site plus dephasing on the listed sites."""
    entries = [ChannelEntry(site, JumpKind.ABSORPTION, ConstantRate(rate_abs))
               for site in range(1, n_sites + 1)]
    if dephasing_kind is not None and dephasing_schedule is not None:
        entries += [ChannelEntry(site, dephasing_kind, dephasing_schedule)
                    for site in dephasing_sites]
    return ChannelSet(n_sites=n_sites, entries=tuple(entries))


def discharging_channels(n_sites: int, rate_dis: float, dephasing_sites: tuple[int, ...],
                         dephasing_kind: JumpKind | None,
                         dephasing_schedule: RateSchedule | None) -> ChannelSet:
    """Dissipation on every site plus dephasing on the listed sites."""
    entries = [ChannelEntry(site, JumpKind.DISSIPATION, ConstantRate(rate_dis))
               for site in range(1, n_sites + 1)]
    if dephasing_kind is not None and dephasing_schedule is not None:
        entries += [ChannelEntry(site, dephasing_kind, dephasing_schedule)
                    for site in dephasing_sites]
    return ChannelSet(n_sites=n_sites, entries=tuple(entries))
