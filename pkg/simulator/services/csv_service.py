"""
CSV Service for simulator outputs
Writes deterministic CSV files: header row with units, floats in shortest round-trip form
"""

from pathlib import Path
import csv
import logging

import numpy as np

from ..exceptions import OutputError

logger = logging.getLogger(__name__)


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ''
    return str(value)


class CsvService:
    """
    Service class turning simulation results into CSV rows.
    Row order is time-major, branch-minor so repeated runs are byte-identical.
    """

    LINE_TERMINATOR = '\n'

    @classmethod
    def emit_csv(cls, path, header: list, rows) -> Path:
        """
        Write header and rows to path.

        Args:
            path: destination file; parent directories are created
            header: column names including units
            rows: iterable of sequences; an empty iterable gives a header-only file

        Returns:
            Path: the written file
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open('w', newline='', encoding='utf-8') as handle:
                writer = csv.writer(handle, lineterminator=cls.LINE_TERMINATOR)
                writer.writerow(header)
                count = 0
                for row in rows:
                    writer.writerow([_cell(value) for value in row])
                    count += 1
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc
        logger.debug(f"Wrote {count} row(s) to {path}")
        return path

    @classmethod
    def trajectory_header(cls, dimension: int) -> list:
        return (
            ['t_s', 'branch']
            + [f'x{axis}_m' for axis in range(1, dimension + 1)]
            + [f'v{axis}_mps' for axis in range(1, dimension + 1)]
            + ['phase_rad', 'weight']
        )

    @classmethod
    def trajectory_rows(cls, trajectories: list, weights: list, branches: list = None):
        branches = branches or [traj.branch_index for traj in trajectories]
        length = max((traj.times.size for traj in trajectories), default=0)
        for step in range(length):
            for traj, weight, branch in zip(trajectories, weights, branches):
                if step >= traj.times.size:
                    continue
                yield (
                    [traj.times[step], branch]
                    + list(traj.positions[step])
                    + list(traj.velocities[step])
                    + [traj.phase[step], weight]
                )

    @classmethod
    def write_trajectories(cls, path, trajectories: list, weights: list, dimension: int,
                           branches: list = None) -> Path:
        return cls.emit_csv(path, cls.trajectory_header(dimension),
                            cls.trajectory_rows(trajectories, weights, branches))

    @classmethod
    def write_prediction(cls, path, prediction, dimension: int) -> Path:
        return cls.write_trajectories(path, prediction.trajectories, prediction.weights,
                                      dimension, prediction.outcomes)

    @classmethod
    def write_state(cls, path, state) -> Path:
        """One row per (branch, system) with the branch amplitude and the system position."""
        dimension = state.dimension
        header = (
            ['branch', 'amplitude_re', 'amplitude_im', 'weight', 'tag', 'frame', 'system']
            + [f'x{axis}_m' for axis in range(1, dimension + 1)]
        )
        rows = []
        for index, branch in enumerate(state.branches):
            for label in state.registry.labels:
                if label not in branch.positions:
                    continue
                rows.append(
                    [index, branch.amplitude.real, branch.amplitude.imag, abs(branch.amplitude) ** 2,
                     branch.ancilla_tag, state.frame, label]
                    + list(branch.position(label))
                )
        return cls.emit_csv(path, header, rows)

    @classmethod
    def write_report(cls, path, rows) -> Path:
        """Rows of (quantity, value, unit)."""
        return cls.emit_csv(path, ['quantity', 'value', 'unit'], rows)

    @classmethod
    def write_validity(cls, path, report) -> Path:
        rows = [
            ['delta_r_R', report.delta_r_R, 'm', ''],
            ['delta_x_R', report.delta_x_R, 'm', ''],
            ['probe_displacement', report.probe_displacement, 'm', ''],
            ['branch_pull_difference', report.branch_pull_difference, 'm', ''],
            ['clock_overlap', report.clock_overlap, '', ''],
            ['reference_distance', report.reference_distance, 'm', ''],
        ]
        rows += [[f'condition_{name}', '', '', verdict] for name, verdict in report.verdicts.items()]
        rows.append(['passed', '', '', report.passed])
        return cls.emit_csv(path, ['quantity', 'value', 'unit', 'verdict'], rows)

    @classmethod
    def write_covariance(cls, path, report) -> Path:
        rows = [
            [entry.model, entry.positional, entry.phase, entry.coherence] for entry in report.entries
        ]
        return cls.emit_csv(path, ['model', 'positional_m', 'phase_rad', 'coherence'], rows)

    @classmethod
    def write_grid(cls, path, tracks: list, dimension: int) -> Path:
        header = ['t_s', 'branch'] + [f'c{axis}_m' for axis in range(1, dimension + 1)] + ['norm']

        def rows():
            length = max((track.times.size for track in tracks), default=0)
            for step in range(length):
                for track in tracks:
                    yield [track.times[step], track.branch_index] + list(track.centroids[step]) + [track.norms[step]]

        return cls.emit_csv(path, header, rows())
