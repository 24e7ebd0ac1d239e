"""
Side-by-side predictions of three gravity models on one scenario
Demonstrates: mean-field vs. collapse vs. covariant QRF evolution, frame-dependence report

Every prediction is expressed in the scenario's own frame (R).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional, Sequence
import logging

from django.conf import settings
from django.db import models
import numpy as np

from .dynamics import MeanFieldPotential, Trajectory, potential_for_branch, trace_semiclassical
from .qrf_transforms import from_mass_frame, mass_frame_maps, to_mass_frame
from .state_core import BranchState, UnitSystem, default_position_tolerance, normalize

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12


class GravityModel(models.TextChoices):
    COVARIANT = 'covariant', 'Covariant QRF'
    SEMICLASSICAL = 'semiclassical', 'Semi-classical (mean field)'
    COLLAPSE = 'collapse', 'Gravitational collapse'


@dataclass
class ModelPrediction:
    """
    Trajectories of one model with their probability weights.

    For the collapse model each trajectory is one outcome and `outcomes` names
    the branch it collapsed onto; the other models have one trajectory per branch.
    """
    model: str
    trajectories: list
    weights: list
    entanglement_flag: bool
    final_states: list
    outcomes: list = field(default_factory=list)

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
            raise ValueError(f"{self.model} weights sum to {sum(self.weights)!r}, not 1")
        if not self.outcomes:
            self.outcomes = [traj.branch_index for traj in self.trajectories]

    @property
    def final_state(self) -> BranchState:
        return self.final_states[0]


def _normalized_weights(state: BranchState) -> list:
    weights = normalize(state).weights
    return list(weights / weights.sum())


def _probes_entangled(trajectories: Sequence[Trajectory], pos_tol: Optional[float] = None) -> bool:
    pos_tol = default_position_tolerance() if pos_tol is None else pos_tol
    finals = np.array([traj.final_position for traj in trajectories])
    return bool(np.any(np.abs(finals - finals[0]) > pos_tol))


def mean_field_potential(state: BranchState, units: UnitSystem) -> MeanFieldPotential:
    """V_sc = Σ |a_i|² V_i, the field sourced by the expected mass distribution."""
    weights = _normalized_weights(state)
    return MeanFieldPotential(
        (weight, potential_for_branch(state, index, units)) for index, weight in enumerate(weights)
    )


def predict_semiclassical(state: BranchState, t: float, dt: float, units: UnitSystem) -> ModelPrediction:
    evolved, trajectories = trace_semiclassical(state, t, dt, units, mean_field_potential(state, units))
    return ModelPrediction(
        model=GravityModel.SEMICLASSICAL,
        trajectories=trajectories,
        weights=_normalized_weights(state),
        entanglement_flag=False,
        final_states=[evolved],
    )


def predict_covariant(state: BranchState, t: float, dt: float, units: UnitSystem) -> ModelPrediction:
    """Transform to the mass frame, evolve each branch there, and transform back."""
    maps = mass_frame_maps(state)
    evolved, trajectories = trace_semiclassical(to_mass_frame(state), t, dt, units)
    trajectories = [
        traj.transformed(maps[traj.branch_index].inverse()) for traj in trajectories
    ]
    return ModelPrediction(
        model=GravityModel.COVARIANT,
        trajectories=trajectories,
        weights=_normalized_weights(state),
        entanglement_flag=_probes_entangled(trajectories),
        final_states=[from_mass_frame(evolved, state.frame)],
    )


def evolve_in_frame_r(state: BranchState, t: float, dt: float, units: UnitSystem):
    """Covariant evolution done directly in frame R, each branch in its own mass configuration."""
    potentials = [potential_for_branch(state, index, units) for index in range(len(state.branches))]
    return trace_semiclassical(state, t, dt, units, potentials)


def _concatenate(first: Trajectory, second: Trajectory) -> Trajectory:
    offset = first.times[-1]
    return replace(
        first,
        times=np.concatenate([first.times, second.times[1:] + offset]),
        positions=np.concatenate([first.positions, second.positions[1:]]),
        velocities=np.concatenate([first.velocities, second.velocities[1:]]),
        phase=np.concatenate([first.phase, second.phase[1:] + first.phase[-1]]),
    )


def predict_collapse(state: BranchState, t: float, dt: float, units: UnitSystem,
                     seed: Optional[int] = None, samples: Optional[int] = None,
                     delay: float = 0.0) -> ModelPrediction:
    """
    Collapse the mass superposition onto one branch, then evolve classically.

    Args:
        seed: RNG seed for sampling mode
        samples: number of sampled collapses; None enumerates every outcome with its Born weight
        delay: collapse time t_c; the state evolves covariantly until then

    Returns:
        ModelPrediction with one trajectory per outcome
    """
    before = None
    if delay > 0:
        before = predict_covariant(state, delay, dt, units)
        state = before.final_state
    remaining = t - delay
    born = _normalized_weights(state)

    if samples is None:
        outcomes, weights = list(range(len(state.branches))), born
    else:
        rng = np.random.default_rng(seed)
        counts = np.bincount(rng.choice(len(born), size=samples, p=born), minlength=len(born))
        outcomes = [index for index, count in enumerate(counts) if count]
        weights = [counts[index] / samples for index in outcomes]
        logger.debug(f"Sampled {samples} collapses: {counts.tolist()}")

    trajectories, final_states = [], []
    for index in outcomes:
        branch = replace(state.branches[index], amplitude=1.0)
        collapsed = state.with_branches([branch])
        potential = potential_for_branch(collapsed, 0, units)
        evolved, (traj,) = trace_semiclassical(collapsed, remaining, dt, units, potential)
        traj = replace(traj, branch_index=index)
        if before is not None:
            traj = _concatenate(before.trajectories[index], traj)
        trajectories.append(traj)
        final_states.append(evolved)

    return ModelPrediction(
        model=GravityModel.COLLAPSE,
        trajectories=trajectories,
        weights=weights,
        entanglement_flag=False,
        final_states=final_states,
        outcomes=outcomes,
    )


def predict(model: str, state: BranchState, t: float, dt: float, units: UnitSystem,
            seed: Optional[int] = None, delay: float = 0.0) -> ModelPrediction:
    if model == GravityModel.COVARIANT:
        return predict_covariant(state, t, dt, units)
    if model == GravityModel.SEMICLASSICAL:
        return predict_semiclassical(state, t, dt, units)
    if model == GravityModel.COLLAPSE:
        return predict_collapse(state, t, dt, units, seed=seed, delay=delay)
    raise ValueError(f"unknown gravity model '{model}'")


def compare_models(state: BranchState, t: float, dt: float, units: UnitSystem,
                   model_names: Sequence[str] = GravityModel.values, seed: Optional[int] = None,
                   delay: float = 0.0) -> dict:
    """Run the requested models in parallel; returns {model: ModelPrediction} in request order."""
    workers = max(1, getattr(settings, 'QRF_SIM_THREADS', 1))
    with ThreadPoolExecutor(max_workers=max(1, min(workers, len(model_names)))) as executor:
        results = executor.map(lambda name: predict(name, state, t, dt, units, seed, delay), model_names)
        return dict(zip(model_names, results))


# =============================================================================
# COVARIANCE VIOLATION REPORT
# =============================================================================

@dataclass
class ModelDiscrepancy:
    model: str
    positional: float
    phase: float = 0.0
    coherence: float = 0.0


@dataclass
class CovarianceViolationReport:
    t: float
    entries: list = field(default_factory=list)

    def for_model(self, model: str) -> ModelDiscrepancy:
        return next(entry for entry in self.entries if entry.model == model)


def _max_separation(first: Trajectory, second: Trajectory) -> float:
    if first.positions.shape == second.positions.shape:
        return float(np.max(np.linalg.norm(first.positions - second.positions, axis=1)))
    return float(np.linalg.norm(first.final_position - second.final_position))


def covariance_violation_report(state: BranchState, t: float, dt: float, units: UnitSystem,
                                model_names: Sequence[str] = GravityModel.values,
                                seed: Optional[int] = None, delay: float = 0.0) -> CovarianceViolationReport:
    """
    Compare each model's frame-R prediction with the frame-M round trip.

    In the mass frame every model reduces to the same definite-field evolution,
    so the round trip is the covariant trajectory of each branch.
    """
    round_trip = predict_covariant(state, t, dt, units).trajectories
    report = CovarianceViolationReport(t=t)
    amplitudes = normalize(state).amplitudes

    for model in model_names:
        if model == GravityModel.COVARIANT:
            _, direct = evolve_in_frame_r(state, t, dt, units)
            pairs = list(zip(direct, round_trip))
            phase = max(
                abs(a.phase_parts.branch_dependent - b.phase_parts.branch_dependent) for a, b in pairs
            )
            report.entries.append(ModelDiscrepancy(
                model, max(_max_separation(a, b) for a, b in pairs), phase=phase,
            ))
        elif model == GravityModel.SEMICLASSICAL:
            direct = predict_semiclassical(state, t, dt, units).trajectories
            report.entries.append(ModelDiscrepancy(
                model, max(_max_separation(a, b) for a, b in zip(direct, round_trip)),
            ))
        elif model == GravityModel.COLLAPSE:
            prediction = predict_collapse(state, t, dt, units, seed=seed, delay=delay)
            positional = max(
                _max_separation(traj, round_trip[index])
                for traj, index in zip(prediction.trajectories, prediction.outcomes)
            )
            coherence = sum(
                2.0 * abs(amplitudes[i] * amplitudes[j])
                for i, j in combinations(range(len(amplitudes)), 2)
            )
            report.entries.append(ModelDiscrepancy(model, positional, coherence=float(coherence)))
        else:
            raise ValueError(f"unknown gravity model '{model}'")
        logger.debug(f"Covariance discrepancy for {model}: {report.entries[-1]}")
    return report
