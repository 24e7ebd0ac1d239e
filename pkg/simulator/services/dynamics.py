"""
Dynamics in a definite-metric frame
Demonstrates: Newtonian potentials, RK4 geodesics, closed-form free fall, Stodolsky phases

All quantities are SI. Potentials are per unit mass (J/kg); the probe mass enters
only through the phase.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence
import logging
import math

from django.conf import settings
import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.optimize import newton

from ..exceptions import (
    NotInMassFrame,
    PastSingularity,
    RelativisticVelocity,
    SingularityApproach,
    StepTooLarge,
    SuperluminalSample,
)
from .state_core import BranchState, UnitSystem, is_definite

logger = logging.getLogger(__name__)

RELATIVISTIC_FRACTION = 0.1


# =============================================================================
# POTENTIALS
# =============================================================================

@dataclass(frozen=True, eq=False)
class PointMass:
    position: np.ndarray
    mass: float

    def __post_init__(self):
        object.__setattr__(self, 'position', np.asarray(self.position, dtype=float).reshape(-1))


class PotentialModel:
    """Base class: value, gradient and g00 of a potential per unit mass."""

    masses: tuple = ()

    def values(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, x) -> float:
        return float(self.values(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def gradient(self, x) -> np.ndarray:
        return self.gradients(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def g00(self, x, units: UnitSystem) -> float:
        return -1.0 - 2.0 * self.value(x) / units.c ** 2

    def nearest_mass_distance(self, x) -> float:
        if not self.masses:
            return math.inf
        x = np.asarray(x, dtype=float)
        return min(float(np.linalg.norm(x - mass.position)) for mass in self.masses)


class PointMassPotential(PotentialModel):
    """V(x) = -Σ G M_i / sqrt(|x - x_i|² + ε²); ε = 0 unless Plummer softening is requested."""

    def __init__(self, masses: Sequence[PointMass], G: float, softening: float = 0.0):
        self.masses = tuple(masses)
        self.G = float(G)
        self.softening = float(softening)
        if self.masses:
            self._positions = np.array([mass.position for mass in self.masses])
            self._strengths = self.G * np.array([mass.mass for mass in self.masses])

    def _separations(self, points):
        offsets = points[:, None, :] - self._positions[None, :, :]
        radii = np.sqrt(np.sum(offsets ** 2, axis=-1) + self.softening ** 2)
        return offsets, radii

    def values(self, points):
        points = np.asarray(points, dtype=float)
        if not self.masses:
            return np.zeros(points.shape[0])
        _, radii = self._separations(points)
        return -np.sum(self._strengths / radii, axis=1)

    def gradients(self, points):
        points = np.asarray(points, dtype=float)
        if not self.masses:
            return np.zeros_like(points)
        offsets, radii = self._separations(points)
        return np.sum(self._strengths[None, :, None] * offsets / radii[..., None] ** 3, axis=1)


class UniformFieldPotential(PotentialModel):
    """V(x) = -g·x: constant acceleration g."""

    def __init__(self, acceleration):
        self.acceleration = np.asarray(acceleration, dtype=float).reshape(-1)

    def values(self, points):
        return -np.asarray(points, dtype=float) @ self.acceleration

    def gradients(self, points):
        return np.broadcast_to(-self.acceleration, np.asarray(points).shape).copy()


class HarmonicPotential(PotentialModel):
    def __init__(self, omega: float, center):
        self.omega = float(omega)
        self.center = np.asarray(center, dtype=float).reshape(-1)

    def values(self, points):
        offsets = np.asarray(points, dtype=float) - self.center
        return 0.5 * self.omega ** 2 * np.sum(offsets ** 2, axis=-1)

    def gradients(self, points):
        return self.omega ** 2 * (np.asarray(points, dtype=float) - self.center)


class MeanFieldPotential(PotentialModel):
    """Weighted sum Σ w_k V_k, the source-averaged field of semi-classical gravity."""

    def __init__(self, components: Sequence[tuple]):
        self.components = tuple((float(weight), potential) for weight, potential in components)
        self.masses = tuple(mass for _, potential in self.components for mass in potential.masses)

    def values(self, points):
        return sum(weight * potential.values(points) for weight, potential in self.components)

    def gradients(self, points):
        return sum(weight * potential.gradients(points) for weight, potential in self.components)


def potential_for_branch(state: BranchState, index: int, units: UnitSystem,
                         softening: float = 0.0) -> PointMassPotential:
    branch = state.branches[index]
    masses = [
        PointMass(branch.position(spec.label), spec.mass) for spec in state.registry.masses
    ]
    return PointMassPotential(masses, units.G, softening)


# =============================================================================
# TRAJECTORIES
# =============================================================================

@dataclass(frozen=True)
class StodolskyPhase:
    """Phase split into rest, kinetic (special-relativistic) and gravitational parts, in radians."""
    rest: float = 0.0
    kinetic: float = 0.0
    gravitational: float = 0.0

    @property
    def special_relativistic(self) -> float:
        return self.rest + self.kinetic

    @property
    def total(self) -> float:
        return self.rest + self.kinetic + self.gravitational

    @property
    def branch_dependent(self) -> float:
        return self.kinetic + self.gravitational


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    phase: np.ndarray
    branch_index: int = 0
    mass: float = 1.0
    phase_parts: StodolskyPhase = field(default_factory=StodolskyPhase)

    def __post_init__(self):
        for name in ('times', 'positions', 'velocities', 'phase'):
            array = np.asarray(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.phase[0] != 0.0:
            raise ValueError("trajectory phase must start at zero")

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def final_position(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def final_velocity(self) -> np.ndarray:
        return self.velocities[-1]

    def transformed(self, mapping) -> 'Trajectory':
        """Express the trajectory in another frame through a rigid map."""
        return replace(
            self,
            positions=mapping.apply(self.positions),
            velocities=self.velocities @ mapping.rotation.T,
        )


# =============================================================================
# CLOSED FORMS
# =============================================================================

def time_to_singularity(x0: float, M: float, units: UnitSystem) -> float:
    if M == 0:
        return math.inf
    return x0 ** 1.5 / (3.0 * math.sqrt(M * units.G / 2.0))


def _fall_fraction(x0: float, M: float, t: float, units: UnitSystem) -> float:
    """k t / x0^{3/2}, the fraction of the way to the center in the zero-energy infall."""
    if x0 <= 0:
        raise ValueError("x0 must be positive")
    fraction = 3.0 * math.sqrt(M * units.G / 2.0) * t / x0 ** 1.5
    if fraction > 1.0:
        raise PastSingularity(f"t = {t} s is past the singularity of a fall from {x0} m")
    return fraction


def radial_freefall(x0: float, M: float, t: float, units: UnitSystem) -> float:
    """
    Zero-energy radial infall x(t) = (x0^{3/2} − 3√(MG/2) t)^{2/3}.

    This is the orbit released with the inward escape speed √(2GM/x0).
    """
    fraction = _fall_fraction(x0, M, t, units)
    if fraction == 1.0:
        return 0.0
    return x0 * math.exp(2.0 / 3.0 * math.log1p(-fraction))


def radial_freefall_velocity(x0: float, M: float, t: float, units: UnitSystem) -> float:
    x = radial_freefall(x0, M, t, units)
    if x == 0.0:
        raise PastSingularity("velocity diverges at the singularity")
    return -math.sqrt(2.0 * units.G * M / x)


def grav_phase_closed(x0: float, M: float, t: float, units: UnitSystem,
                      probe_mass: float = 1.0) -> float:
    """m_S √(2MG) ((x0^{3/2} − 3√(MG/2) t)^{1/3} − √x0) / ħ; its time derivative is m_S V(x(t))/ħ."""
    fraction = _fall_fraction(x0, M, t, units)
    if fraction == 1.0:
        cube_root_gap = -math.sqrt(x0)
    else:
        cube_root_gap = math.sqrt(x0) * math.expm1(math.log1p(-fraction) / 3.0)
    return probe_mass * math.sqrt(2.0 * M * units.G) * cube_root_gap / units.hbar


def radial_infall_from_rest(d: float, M: float, t: float, units: UnitSystem) -> float:
    """
    Displacement r(t) − d of a body released at rest at distance d from M.

    Uses the cycloid parametrization r = d cos²η, t = √(d³/2GM)(η + sinη cosη),
    written so that tiny displacements keep full relative precision.
    """
    if M == 0 or t == 0:
        return 0.0
    target = t * math.sqrt(2.0 * units.G * M / d ** 3)
    if target >= math.pi / 2:
        raise PastSingularity(f"a body at rest {d} m from the mass collides before {t} s")
    eta = newton(
        lambda value: value + 0.5 * math.sin(2.0 * value) - target,
        x0=0.5 * target,
        fprime=lambda value: 2.0 * math.cos(value) ** 2,
        tol=np.finfo(float).tiny,
        rtol=1e-14,
        maxiter=200,
    )
    return -d * math.sin(eta) ** 2


def closed_form_displacement(d: float, M: float, t: float, units: UnitSystem,
                             printed_subtrahend: bool = False) -> float:
    """r(t) − d along the zero-energy infall; printed_subtrahend uses d^{2/3} instead of d."""
    if printed_subtrahend:
        return radial_freefall(d, M, t, units) - d ** (2.0 / 3.0)
    fraction = _fall_fraction(d, M, t, units)
    if fraction == 1.0:
        return -d
    return d * math.expm1(2.0 / 3.0 * math.log1p(-fraction))


# =============================================================================
# GEODESICS (RK4)
# =============================================================================

def _default_energy_tolerance() -> float:
    return getattr(settings, 'QRF_ENERGY_TOLERANCE', 1e-6)


def _default_r_min(pot: PotentialModel, x0: np.ndarray) -> float:
    factor = getattr(settings, 'QRF_R_MIN_FACTOR', 1e-3)
    distance = pot.nearest_mass_distance(x0)
    return 0.0 if math.isinf(distance) else factor * distance


def geodesic_integrate(pot: PotentialModel, x0, v0, t_end: float, dt: float, *,
                       mass: float = 1.0, r_min: Optional[float] = None,
                       energy_tol: Optional[float] = None, branch_index: int = 0) -> Trajectory:
    """
    Integrate ẍ = −∇V(x) with classic fourth-order Runge–Kutta.

    The step is adjusted to t_end / round(t_end / dt) so the last sample lands on t_end.

    Args:
        pot: potential per unit mass
        x0, v0: initial position (m) and velocity (m/s), any dimension
        t_end: duration (s)
        dt: requested step (s)
        mass: probe mass carried into the trajectory for phase bookkeeping
        r_min: singularity guard radius; defaults to QRF_R_MIN_FACTOR times the initial distance
        energy_tol: allowed relative energy drift per step

    Returns:
        Trajectory with a zero phase column (see accumulate_phase)
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must not be negative")
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    v = np.asarray(v0, dtype=float).reshape(-1).copy()
    r_min = _default_r_min(pot, x) if r_min is None else r_min
    energy_tol = _default_energy_tolerance() if energy_tol is None else energy_tol
    if pot.nearest_mass_distance(x) <= r_min:
        raise SingularityApproach(f"start point lies within r_min = {r_min} m of a mass")

    steps = max(1, int(round(t_end / dt))) if t_end > 0 else 0
    h = t_end / steps if steps else 0.0
    positions = np.empty((steps + 1, x.size))
    velocities = np.empty((steps + 1, x.size))
    positions[0], velocities[0] = x, v

    def acceleration(point):
        return -pot.gradient(point)

    energy = 0.5 * v @ v + pot.value(x)
    for step in range(1, steps + 1):
        k1x, k1v = v, acceleration(x)
        k2x, k2v = v + 0.5 * h * k1v, acceleration(x + 0.5 * h * k1x)
        k3x, k3v = v + 0.5 * h * k2v, acceleration(x + 0.5 * h * k2x)
        k4x, k4v = v + h * k3v, acceleration(x + h * k3x)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

        if pot.nearest_mass_distance(x) <= r_min:
            raise SingularityApproach(
                f"probe entered r_min = {r_min:.3e} m at t = {step * h:.6e} s"
            )
        kinetic, potential = 0.5 * v @ v, pot.value(x)
        scale = kinetic + abs(potential)
        drift = abs(kinetic + potential - energy)
        if scale > 0 and drift / scale > energy_tol:
            raise StepTooLarge(
                f"energy drift {drift / scale:.3e} per step exceeds {energy_tol:.1e}; reduce dt"
            )
        energy = kinetic + potential
        positions[step], velocities[step] = x, v

    times = np.linspace(0.0, t_end, steps + 1)
    return Trajectory(times, positions, velocities, np.zeros(steps + 1),
                      branch_index=branch_index, mass=mass)


# =============================================================================
# PHASES
# =============================================================================

def _speed_ratio_squared(traj: Trajectory, units: UnitSystem) -> np.ndarray:
    return np.sum(traj.velocities ** 2, axis=1) / units.c ** 2


def _phase_rates(pot: PotentialModel, traj: Trajectory, units: UnitSystem):
    """Rest, kinetic and gravitational phase rates (rad/s) at every sample."""
    beta2 = _speed_ratio_squared(traj, units)
    if np.any(beta2 > RELATIVISTIC_FRACTION ** 2):
        raise RelativisticVelocity("probe speed exceeds 0.1 c; the weak-field phase does not apply")
    potential = pot.values(traj.positions)
    lorentz = np.sqrt(1.0 - beta2)
    scale = traj.mass / units.hbar
    rest = np.full(traj.times.shape, scale * units.c ** 2)
    kinetic = -scale * np.sum(traj.velocities ** 2, axis=1) / (1.0 + lorentz)
    gravitational = scale * 2.0 * potential / (
        np.sqrt(1.0 - beta2 + 2.0 * potential / units.c ** 2) + lorentz
    )
    return rest, kinetic, gravitational


def _integrate(rate: np.ndarray, times: np.ndarray) -> float:
    if times.size < 2:
        return 0.0
    return float(simpson(rate, x=times))


def stodolsky_phase_parts(pot: PotentialModel, traj: Trajectory, units: UnitSystem) -> StodolskyPhase:
    rest, kinetic, gravitational = _phase_rates(pot, traj, units)
    return StodolskyPhase(
        rest=_integrate(rest, traj.times),
        kinetic=_integrate(kinetic, traj.times),
        gravitational=_integrate(gravitational, traj.times),
    )


def stodolsky_phase(pot: PotentialModel, traj: Trajectory, units: UnitSystem) -> float:
    """Proper-time phase (m c²/ħ)∫dτ along the path, by composite Simpson quadrature."""
    return stodolsky_phase_parts(pot, traj, units).total


def sr_phase(traj: Trajectory, units: UnitSystem) -> float:
    beta2 = _speed_ratio_squared(traj, units)
    if np.any(beta2 >= 1.0):
        raise SuperluminalSample("a trajectory sample moves at or above c")
    scale = traj.mass / units.hbar
    rest = units.c ** 2 * scale * np.ones_like(beta2)
    kinetic = -scale * np.sum(traj.velocities ** 2, axis=1) / (1.0 + np.sqrt(1.0 - beta2))
    return _integrate(rest, traj.times) + _integrate(kinetic, traj.times)


def accumulate_phase(pot: PotentialModel, traj: Trajectory, units: UnitSystem,
                     retain_rest: Optional[bool] = None) -> Trajectory:
    """Fill the cumulative phase column and the final phase split."""
    if retain_rest is None:
        retain_rest = getattr(settings, 'QRF_RETAIN_REST_PHASE', True)
    parts = stodolsky_phase_parts(pot, traj, units)
    if traj.times.size < 2:
        return replace(traj, phase_parts=parts)
    rest, kinetic, gravitational = _phase_rates(pot, traj, units)
    rate = kinetic + gravitational + (rest if retain_rest else 0.0)
    phase = cumulative_simpson(rate, x=traj.times, initial=0.0)
    return replace(traj, phase=phase, phase_parts=parts)


# =============================================================================
# SEMI-CLASSICAL BRANCH EVOLUTION
# =============================================================================

def _worker_count(workers: Optional[int]) -> int:
    return max(1, workers or getattr(settings, 'QRF_SIM_THREADS', 1))


def trace_semiclassical(state: BranchState, t: float, dt: float, units: UnitSystem,
                        pot_per_branch=None, *, workers: Optional[int] = None,
                        retain_rest: Optional[bool] = None):
    """
    Evolve the probe of every branch along its geodesic and attach the phase.

    With pot_per_branch omitted the masses must already be definite (mass frame)
    and each branch uses its own point-mass field.

    Returns:
        (evolved BranchState, list of Trajectory in the state's frame)
    """
    probe = state.registry.probe
    if probe is None:
        raise ValueError("state has no probe system to evolve")
    if pot_per_branch is None:
        mass_labels = [spec.label for spec in state.registry.masses]
        if not is_definite(state, mass_labels):
            raise NotInMassFrame("masses are indefinite; transform to a mass frame first")
        pot_per_branch = [potential_for_branch(state, i, units) for i in range(len(state.branches))]
    elif isinstance(pot_per_branch, PotentialModel):
        pot_per_branch = [pot_per_branch] * len(state.branches)
    if retain_rest is None:
        retain_rest = getattr(settings, 'QRF_RETAIN_REST_PHASE', True)

    def evolve(index):
        branch = state.branches[index]
        pot = pot_per_branch[index]
        traj = geodesic_integrate(
            pot, branch.position(probe.label), branch.velocity(probe.label), t, dt,
            mass=probe.mass, branch_index=index,
        )
        return accumulate_phase(pot, traj, units, retain_rest)

    with ThreadPoolExecutor(max_workers=_worker_count(workers)) as executor:
        trajectories = list(executor.map(evolve, range(len(state.branches))))

    branches = []
    for branch, traj in zip(state.branches, trajectories):
        parts = traj.phase_parts
        amplitude = branch.amplitude * np.exp(-1j * parts.branch_dependent)
        if retain_rest:
            amplitude *= np.exp(-1j * parts.rest)
        positions = dict(branch.positions)
        velocities = dict(branch.velocities)
        positions[probe.label] = traj.final_position
        velocities[probe.label] = traj.final_velocity
        branches.append(branch.with_positions(positions, velocities, amplitude=amplitude))
    logger.debug(f"Evolved {len(branches)} branches for {t} s")
    return state.with_branches(branches), trajectories


def evolve_semiclassical(state: BranchState, pot_per_branch, t: float, dt: float,
                         units: Optional[UnitSystem] = None) -> BranchState:
    units = units or UnitSystem.codata()
    if t == 0:
        return state
    evolved, _ = trace_semiclassical(state, t, dt, units, pot_per_branch)
    return evolved
