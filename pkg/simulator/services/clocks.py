"""
Two-level clocks in a superposition of gravitational time dilations
Demonstrates: weak-field proper time, internal-Hamiltonian evolution, branch visibility

Proper times are handled as offsets τ − t = tV/c² so that a 1e-32 s difference
is not lost against a 1 s duration.
"""

from dataclasses import dataclass, field, replace
from typing import Optional
import logging
import math

from django.conf import settings
import numpy as np

from ..exceptions import StrongField
from .dynamics import PointMass, PointMassPotential, PotentialModel, Trajectory
from .dynamics import potential_for_branch, stodolsky_phase_parts
from .qrf_transforms import from_mass_frame, to_mass_frame
from .state_core import BranchState, UnitSystem

logger = logging.getLogger(__name__)

STRONG_FIELD_LIMIT = 1e-2
PLUS_STATE = (1 / math.sqrt(2), 1 / math.sqrt(2))


def planck_time(units: UnitSystem) -> float:
    return math.sqrt(units.hbar * units.G / units.c ** 5)


@dataclass(frozen=True)
class ClockSpec:
    """Internal levels E0, E1 (J) and the initial internal state in the {|0⟩, |1⟩} basis."""
    E0: float
    E1: float
    initial: tuple = PLUS_STATE

    def __post_init__(self):
        if self.E1 == self.E0:
            raise ValueError("clock levels E0 and E1 must differ")
        pair = np.asarray(self.initial, dtype=complex).reshape(2)
        if abs(np.linalg.norm(pair) - 1.0) > 1e-12:
            raise ValueError("initial clock state is not unit norm")
        object.__setattr__(self, 'initial', tuple(complex(value) for value in pair))

    @classmethod
    def for_duration(cls, t: float, units: UnitSystem, E0: float = 0.0) -> 'ClockSpec':
        """Clock completing one full oscillation in t."""
        return cls(E0=E0, E1=E0 + 2.0 * math.pi * units.hbar / t)

    def gap(self) -> float:
        return self.E1 - self.E0


def proper_time_offset(pot: PotentialModel, x, t: float, units: UnitSystem) -> float:
    """τ − t = tV(x)/c² for a clock held static at x."""
    potential = pot.value(x)
    if abs(potential) / units.c ** 2 > STRONG_FIELD_LIMIT:
        raise StrongField(f"|V|/c² = {abs(potential) / units.c ** 2:.3e} is outside the weak field")
    return t * potential / units.c ** 2


def proper_time(pot: PotentialModel, x, t: float, units: UnitSystem) -> float:
    return t + proper_time_offset(pot, x, t, units)


def evolve_clock(spec: ClockSpec, tau: float, units: UnitSystem, offset: float = 0.0,
                 state=None) -> np.ndarray:
    """Apply e^{−iΩτ} with Ω = diag(E0, E1); the proper time is tau + offset."""
    pair = np.asarray(spec.initial if state is None else state, dtype=complex)
    energies = np.array([spec.E0, spec.E1])
    return pair * np.exp(-1j * energies * tau / units.hbar) * np.exp(-1j * energies * offset / units.hbar)


def overlap_visibility(first, second) -> float:
    return float(abs(np.vdot(first, second)) ** 2)


def formula_visibility(spec: ClockSpec, delta_tau: float, units: UnitSystem) -> float:
    return math.cos((spec.E0 - spec.E1) * delta_tau / (2.0 * units.hbar)) ** 2


def p_plus(spec: ClockSpec, M: float, x: float, t: float, units: UnitSystem) -> float:
    """Probability of finding the clock in |+⟩ after t at distance x from M."""
    pot = PointMassPotential([PointMass([x], M)], units.G)
    offset = proper_time_offset(pot, [0.0], t, units)
    evolved = evolve_clock(spec, t, units, offset)
    return min(1.0, overlap_visibility(np.array(PLUS_STATE), evolved))


# =============================================================================
# CLOCK SCENARIO
# =============================================================================

@dataclass
class ClockReport:
    offsets: list = field(default_factory=list)
    delta_tau: float = 0.0
    max_delta_tau: float = 0.0
    visibility: float = 1.0
    formula_visibility: float = 1.0
    planck_time: float = 0.0

    @property
    def exceeds_planck(self) -> bool:
        return abs(self.delta_tau) > self.planck_time


def _static_trajectory(x, t: float, mass: float, index: int) -> Trajectory:
    times = np.array([0.0, 0.5 * t, t])
    positions = np.tile(np.asarray(x, dtype=float), (3, 1))
    return Trajectory(times, positions, np.zeros_like(positions), np.zeros(3),
                      branch_index=index, mass=mass)


def run_clock_scenario(state: BranchState, t: float, units: UnitSystem,
                       spec: Optional[ClockSpec] = None, clock: Optional[str] = None):
    """
    Hold the clock static next to a superposed mass for time t.

    The state is moved to the mass frame, each branch's clock runs for its own
    proper time and picks up its static-path phase, and the result is moved back.

    Returns:
        (final BranchState in the original frame, ClockReport)
    """
    clocks = state.registry.clocks
    if clock is None:
        if not clocks:
            raise ValueError("scenario has no clock system")
        clock = clocks[0].label
    clock_spec = state.registry.get(clock)
    spec = spec or ClockSpec.for_duration(t, units)
    retain_rest = getattr(settings, 'QRF_RETAIN_REST_PHASE', True)

    in_mass_frame = to_mass_frame(state)
    offsets, branches = [], []
    for index, branch in enumerate(in_mass_frame.branches):
        pot = potential_for_branch(in_mass_frame, index, units)
        position = branch.position(clock)
        offset = proper_time_offset(pot, position, t, units)
        internal = evolve_clock(spec, t, units, offset, branch.clock_internal.get(clock))
        amplitude = branch.amplitude
        if clock_spec.mass is not None and t > 0:
            parts = stodolsky_phase_parts(pot, _static_trajectory(position, t, clock_spec.mass, index), units)
            amplitude *= np.exp(-1j * parts.branch_dependent)
            if retain_rest:
                amplitude *= np.exp(-1j * parts.rest)
        clock_internal = dict(branch.clock_internal)
        clock_internal[clock] = internal
        offsets.append(offset)
        branches.append(replace(branch, amplitude=amplitude, clock_internal=clock_internal))

    final = from_mass_frame(in_mass_frame.with_branches(branches))
    delta_tau = offsets[1] - offsets[0] if len(offsets) > 1 else 0.0
    partner = branches[1] if len(branches) > 1 else branches[0]
    report = ClockReport(
        offsets=offsets,
        delta_tau=delta_tau,
        max_delta_tau=max(offsets) - min(offsets),
        visibility=overlap_visibility(branches[0].clock_internal[clock], partner.clock_internal[clock]),
        formula_visibility=formula_visibility(spec, delta_tau, units),
        planck_time=planck_time(units),
    )
    logger.info(f"Clock {clock}: Δτ = {report.delta_tau:.4e} s, visibility {report.visibility:.12f}")
    return final, report
