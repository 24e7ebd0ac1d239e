"""
Far-frame validity service
Checks whether the reference frame R may be treated as unaffected by the masses
over the scenario duration, so that the frame-R description stays meaningful.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional
import logging
import math

from django.conf import settings
import numpy as np

from ..exceptions import MissingUncertainty
from ..signals import validity_checked
from .clocks import proper_time_offset
from .dynamics import (
    closed_form_displacement,
    geodesic_integrate,
    potential_for_branch,
    radial_infall_from_rest,
)
from .state_core import UnitSystem

logger = logging.getLogger(__name__)

FAR_FRAME_FORMULAS = ('rest', 'closed_form', 'closed_form_printed')


@dataclass
class ValidityReport:
    """
    Magnitudes (all ≥ 0) behind the far-frame conditions and the verdict on each.

    clock_overlap is None when the scenario carries no clock.
    """
    delta_r_R: float
    delta_x_R: float
    probe_displacement: float
    branch_pull_difference: float
    clock_overlap: Optional[float]
    reference_distance: float
    formula: str = 'rest'
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    @property
    def failed_conditions(self) -> list:
        return [name for name, verdict in self.verdicts.items() if not verdict]


class ValidityService:
    """
    Service class evaluating the far-frame conditions of a scenario.

    Conditions:
        uncertainty: |Δr_R| < Δx_R
        tracking:    |Δr_R| ≤ |Δr_S| / ratio
        branch:      max |Δr_R(i) − Δr_R(j)| < Δx_R
        clock:       clock overlap ≥ 1 − ε (only with a clock)
    """

    @classmethod
    def tracking_ratio(cls) -> float:
        return getattr(settings, 'QRF_TRACKING_RATIO', 100.0)

    @classmethod
    def overlap_epsilon(cls) -> float:
        return getattr(settings, 'QRF_OVERLAP_EPSILON', 1e-6)

    @classmethod
    def formula(cls) -> str:
        formula = getattr(settings, 'QRF_FAR_FRAME_FORMULA', 'rest')
        if formula not in FAR_FRAME_FORMULAS:
            raise ValueError(f"QRF_FAR_FRAME_FORMULA must be one of {FAR_FRAME_FORMULAS}, not '{formula}'")
        return formula

    @classmethod
    def reference_displacement(cls, M: float, d: float, t: float, units: UnitSystem,
                               formula: Optional[str] = None) -> float:
        """
        Worst-case displacement of R toward the total mass M placed at distance d.

        Args:
            formula: 'rest' (exact fall from rest), 'closed_form' (zero-energy infall,
                r(t) − d) or 'closed_form_printed' (the d^{2/3} subtrahend variant)

        Returns:
            float: |Δr_R| in meters
        """
        formula = formula or cls.formula()
        if M == 0 or t == 0:
            return 0.0
        if formula == 'rest':
            return abs(radial_infall_from_rest(d, M, t, units))
        return abs(closed_form_displacement(d, M, t, units, printed_subtrahend=formula == 'closed_form_printed'))

    @classmethod
    def branch_distances(cls, scenario) -> list:
        """Distance from R1 (the origin) to the closest mass, per branch."""
        state = scenario.state
        labels = [spec.label for spec in scenario.registry.masses]
        if not labels:
            return [math.inf] * len(state.branches)
        return [
            min(float(np.linalg.norm(branch.position(label))) for label in labels)
            for branch in state.branches
        ]

    @classmethod
    def probe_displacement(cls, scenario) -> float:
        """|Δr_S|: fall of the probe (or clock) from rest in the first branch's field."""
        label = scenario.probe_label
        if label is None or not scenario.registry.masses:
            return 0.0
        state = scenario.state
        pot = potential_for_branch(state, 0, scenario.units)
        start = state.branches[0].position(label)
        traj = geodesic_integrate(pot, start, np.zeros_like(start), scenario.duration, scenario.dt)
        return float(np.linalg.norm(traj.final_position - start))

    @classmethod
    def clock_overlap(cls, scenario) -> Optional[float]:
        """Worst pairwise overlap of a clock carried by R across the branches."""
        if scenario.clock is None:
            return None
        state, units, t = scenario.state, scenario.units, scenario.duration
        offsets = [
            proper_time_offset(potential_for_branch(state, index, units), branch.position('R1'), t, units)
            for index, branch in enumerate(state.branches)
        ]
        gap = scenario.clock.E0 - scenario.clock.E1
        overlaps = [
            math.cos(gap * (first - second) / (2.0 * units.hbar)) ** 2
            for first, second in combinations(offsets, 2)
        ]
        return min(overlaps, default=1.0)

    @classmethod
    def validate(cls, scenario) -> ValidityReport:
        if scenario.reference_uncertainty is None:
            raise MissingUncertainty(
                f"scenario '{scenario.name}' has no [reference] uncertainty"
            )
        units, t = scenario.units, scenario.duration
        formula = cls.formula()
        total_mass = sum(spec.mass for spec in scenario.registry.masses)

        if scenario.reference_distance is not None:
            distances = [scenario.reference_distance] * len(scenario.state.branches)
        else:
            distances = cls.branch_distances(scenario)
        d = min(distances)
        if math.isinf(d):
            pulls = [0.0] * len(distances)
        else:
            pulls = [cls.reference_displacement(total_mass, di, t, units, formula) for di in distances]
        delta_r_R = max(pulls)
        pull_difference = max((abs(a - b) for a, b in combinations(pulls, 2)), default=0.0)
        probe = cls.probe_displacement(scenario)
        overlap = cls.clock_overlap(scenario)
        delta_x_R = scenario.reference_uncertainty

        verdicts = {
            'uncertainty': delta_r_R < delta_x_R,
            'tracking': delta_r_R <= probe / cls.tracking_ratio(),
            'branch': pull_difference < delta_x_R,
        }
        if overlap is not None:
            verdicts['clock'] = overlap >= 1.0 - cls.overlap_epsilon()

        report = ValidityReport(
            delta_r_R=delta_r_R,
            delta_x_R=delta_x_R,
            probe_displacement=probe,
            branch_pull_difference=pull_difference,
            clock_overlap=overlap,
            reference_distance=d,
            formula=formula,
            verdicts=verdicts,
        )
        validity_checked.send(sender=cls, scenario=scenario, report=report)
        return report


def validate_far_frame(scenario) -> ValidityReport:
    return ValidityService.validate(scenario)
