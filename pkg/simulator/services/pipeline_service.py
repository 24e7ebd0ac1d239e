"""
Pipeline Service for scenario runs
Orchestrates validity checks, QRF changes, evolution and model comparisons, and writes the CSV outputs
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional
import logging

from django.conf import settings
from django.test.utils import override_settings
import numpy as np

from ..exceptions import MissingUncertainty, ValidityFailed
from ..signals import pipeline_finished
from .clocks import run_clock_scenario
from .csv_service import CsvService
from .grid import GridWavefunction, grid_track
from .model_compare import GravityModel, compare_models, covariance_violation_report
from .qrf_transforms import (
    align_branches,
    ancilla_transform,
    ancilla_transform_inverse,
    from_mass_frame,
    mass_frame_maps,
    qrf_shift_one_mass,
    s_r_to_m,
    to_mass_frame,
    uses_isometry,
)
from .dynamics import PointMass, PointMassPotential
from .validity_service import ValidityService

logger = logging.getLogger(__name__)


@dataclass
class PipelineResult:
    paths: dict = field(default_factory=dict)
    validity: Optional[object] = None
    predictions: dict = field(default_factory=dict)
    clock_report: Optional[object] = None
    report_rows: list = field(default_factory=list)


class PipelineService:
    """
    Service class running a scenario end to end.

    Each public method writes its CSV files into out_dir and returns a PipelineResult.
    Scenario [tolerances] override the matching settings for the duration of the call.
    """

    @classmethod
    def _with_overrides(cls, scenario, seed=None, dt=None):
        changes = {}
        if seed is not None:
            changes['seed'] = seed
        if dt is not None:
            changes['dt'] = dt
        return replace(scenario, **changes) if changes else scenario

    @classmethod
    def _strict(cls, scenario, strict: Optional[bool]) -> bool:
        if strict is not None:
            return strict
        if scenario.strict is not None:
            return scenario.strict
        return getattr(settings, 'QRF_STRICT', False)

    @classmethod
    def _finish(cls, scenario, result: PipelineResult, out_dir: Path) -> PipelineResult:
        if result.report_rows:
            result.paths['report'] = CsvService.write_report(out_dir / 'report.csv', result.report_rows)
        pipeline_finished.send(sender=cls, scenario=scenario, paths=result.paths)
        return result

    # =========================================================================
    # VALIDITY
    # =========================================================================

    @classmethod
    def check_validity(cls, scenario, out_dir: Path, strict: bool, result: PipelineResult):
        """
        Evaluate the far-frame conditions and write validity.csv.

        Raises:
            ValidityFailed: a condition fails and strict is set
            MissingUncertainty: strict is set and the scenario has no reference uncertainty
        """
        try:
            report = ValidityService.validate(scenario)
        except MissingUncertainty:
            if strict:
                raise
            logger.warning(f"Scenario '{scenario.name}' has no reference uncertainty; skipping validity")
            return None
        result.validity = report
        result.paths['validity'] = CsvService.write_validity(out_dir / 'validity.csv', report)
        if not report.passed:
            message = f"far-frame condition(s) failed: {', '.join(report.failed_conditions)}"
            if strict:
                raise ValidityFailed(message, report)
            logger.warning(f"Scenario '{scenario.name}': {message}; continuing")
        return report

    @classmethod
    def validate(cls, scenario, out_dir, strict: Optional[bool] = None) -> PipelineResult:
        out_dir = Path(out_dir)
        result = PipelineResult()
        with override_settings(**scenario.settings_overrides()):
            report = ValidityService.validate(scenario)
            result.validity = report
            result.paths['validity'] = CsvService.write_validity(out_dir / 'validity.csv', report)
            if not report.passed and cls._strict(scenario, strict):
                raise ValidityFailed(
                    f"far-frame condition(s) failed: {', '.join(report.failed_conditions)}", report
                )
        return cls._finish(scenario, result, out_dir)

    # =========================================================================
    # TRANSFORM
    # =========================================================================

    @classmethod
    def mass_frame_state(cls, scenario):
        """The scenario state seen from the mass frame, using the operator the scenario asks for."""
        state = scenario.state
        if scenario.qrf == 'ancilla':
            return ancilla_transform(state, align_branches(state))
        if scenario.qrf == 'isometry' or (scenario.qrf == 'auto' and uses_isometry(state)):
            return s_r_to_m(state)
        return qrf_shift_one_mass(state, scenario.registry.masses[0].label)

    @classmethod
    def transform(cls, scenario, out_dir) -> PipelineResult:
        """Write the mass-frame state and the round-trip error back to frame R."""
        out_dir = Path(out_dir)
        result = PipelineResult()
        with override_settings(**scenario.settings_overrides()):
            transformed = cls.mass_frame_state(scenario)
            if transformed.ancilla_maps is not None:
                restored = ancilla_transform_inverse(transformed)
            else:
                restored = from_mass_frame(transformed, scenario.state.frame)
        error = max(
            float(np.max(np.abs(after.position(label) - before.position(label))))
            for before, after in zip(scenario.state.branches, restored.branches)
            for label in before.positions
        )
        result.paths['state'] = CsvService.write_state(out_dir / 'state.csv', transformed)
        result.report_rows += [
            ['frame', transformed.frame, ''],
            ['round_trip_position_error', error, 'm'],
        ]
        logger.info(f"Transformed '{scenario.name}' to frame {transformed.frame}; round trip error {error:.3e} m")
        return cls._finish(scenario, result, out_dir)

    # =========================================================================
    # CLOCK
    # =========================================================================

    @classmethod
    def _clock_rows(cls, report) -> list:
        rows = [[f'proper_time_offset_{index}', offset, 's'] for index, offset in enumerate(report.offsets)]
        rows += [
            ['delta_tau', report.delta_tau, 's'],
            ['max_delta_tau', report.max_delta_tau, 's'],
            ['clock_visibility', report.visibility, ''],
            ['clock_visibility_formula', report.formula_visibility, ''],
            ['planck_time', report.planck_time, 's'],
            ['exceeds_planck_time', report.exceeds_planck, ''],
        ]
        return rows

    @classmethod
    def clock(cls, scenario, out_dir) -> PipelineResult:
        out_dir = Path(out_dir)
        result = PipelineResult()
        with override_settings(**scenario.settings_overrides()):
            final, report = run_clock_scenario(scenario.state, scenario.duration, scenario.units, scenario.clock)
        result.clock_report = report
        result.report_rows += cls._clock_rows(report)
        result.paths['state'] = CsvService.write_state(out_dir / 'state.csv', final)
        return cls._finish(scenario, result, out_dir)

    # =========================================================================
    # COMPARE
    # =========================================================================

    @classmethod
    def _write_predictions(cls, scenario, predictions: dict, out_dir: Path, result: PipelineResult):
        for name, prediction in predictions.items():
            result.paths[f'predictions_{name}'] = CsvService.write_prediction(
                out_dir / f'predictions_{name}.csv', prediction, scenario.dimension
            )
            result.report_rows.append([f'entanglement_{name}', prediction.entanglement_flag, ''])
        result.predictions.update(predictions)

    @classmethod
    def compare(cls, scenario, out_dir, seed: Optional[int] = None, dt: Optional[float] = None) -> PipelineResult:
        scenario = cls._with_overrides(scenario, seed, dt)
        out_dir = Path(out_dir)
        result = PipelineResult()
        with override_settings(**scenario.settings_overrides()):
            predictions = compare_models(
                scenario.state, scenario.duration, scenario.dt, scenario.units,
                scenario.models, seed=scenario.seed, delay=scenario.collapse_delay,
            )
            cls._write_predictions(scenario, predictions, out_dir, result)
            report = covariance_violation_report(
                scenario.state, scenario.duration, scenario.dt, scenario.units,
                scenario.models, seed=scenario.seed, delay=scenario.collapse_delay,
            )
        result.paths['covariance'] = CsvService.write_covariance(out_dir / 'covariance.csv', report)
        return cls._finish(scenario, result, out_dir)

    # =========================================================================
    # RUN
    # =========================================================================

    @classmethod
    def _grid_tracks(cls, scenario) -> list:
        """Evolve a Gaussian probe packet per branch in the mass frame."""
        state, settings_grid = scenario.state, scenario.grid
        probe = scenario.registry.probe.label
        in_mass_frame = to_mass_frame(state)
        tracks = []
        for index, (branch, mapping) in enumerate(zip(in_mass_frame.branches, mass_frame_maps(state))):
            packet = GridWavefunction.gaussian(
                branch.position(probe), settings_grid.width, settings_grid.spacing,
                settings_grid.points, scenario.registry.probe.mass,
            )
            masses = [
                PointMass(branch.position(spec.label), spec.mass) for spec in scenario.registry.masses
            ]
            pot = PointMassPotential(masses, scenario.units.G, settings_grid.softening)
            track = grid_track(packet, pot, scenario.duration, scenario.dt, scenario.units, index)
            inverse = mapping.inverse()
            track.centroids = inverse.apply(track.centroids)
            tracks.append(track)
        return tracks

    @classmethod
    def run(cls, scenario, out_dir, strict: Optional[bool] = None, seed: Optional[int] = None,
            dt: Optional[float] = None) -> PipelineResult:
        """
        Validity check, QRF pipeline and requested model comparisons.

        Raises:
            ValidityFailed: strict mode and a far-frame condition fails; nothing else is written
        """
        scenario = cls._with_overrides(scenario, seed, dt)
        out_dir = Path(out_dir)
        strict = cls._strict(scenario, strict)
        result = PipelineResult()
        logger.info(f"Running scenario '{scenario.name}' (D = {scenario.dimension}, {len(scenario.state.branches)} branches)")

        with override_settings(**scenario.settings_overrides()):
            cls.check_validity(scenario, out_dir, strict, result)

            if scenario.registry.probe is not None:
                if scenario.dynamics == 'grid':
                    tracks = cls._grid_tracks(scenario)
                    result.paths['grid'] = CsvService.write_grid(out_dir / 'grid.csv', tracks, scenario.dimension)
                    result.report_rows += [
                        [f'grid_norm_drift_{track.branch_index}', abs(track.norms[-1] - track.norms[0]), '']
                        for track in tracks
                    ]
                else:
                    predictions = compare_models(
                        scenario.state, scenario.duration, scenario.dt, scenario.units,
                        scenario.models, seed=scenario.seed, delay=scenario.collapse_delay,
                    )
                    covariant = predictions.get(GravityModel.COVARIANT.value)
                    if covariant is not None:
                        result.paths['trajectories'] = CsvService.write_trajectories(
                            out_dir / 'trajectories.csv', covariant.trajectories, covariant.weights,
                            scenario.dimension,
                        )
                        result.paths['state'] = CsvService.write_state(out_dir / 'state.csv', covariant.final_state)
                        result.report_rows += [
                            [f'branch_phase_{traj.branch_index}', traj.phase_parts.branch_dependent, 'rad']
                            for traj in covariant.trajectories
                        ]
                    cls._write_predictions(scenario, predictions, out_dir, result)

            if scenario.clock is not None:
                final, report = run_clock_scenario(
                    scenario.state, scenario.duration, scenario.units, scenario.clock
                )
                result.clock_report = report
                result.report_rows += cls._clock_rows(report)
                if 'state' not in result.paths:
                    result.paths['state'] = CsvService.write_state(out_dir / 'state.csv', final)

        return cls._finish(scenario, result, out_dir)


def run_pipeline(scenario, out_dir, **options) -> PipelineResult:
    return PipelineService.run(scenario, out_dir, **options)
