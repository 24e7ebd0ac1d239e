"""
Tests for two-level clocks next to a superposed mass
"""

import math

from django.test import SimpleTestCase
import numpy as np
from numpy.testing import assert_allclose

from simulator.exceptions import StrongField
from simulator.scenarios import load_scenario
from simulator.services.clocks import (
    PLUS_STATE,
    ClockSpec,
    evolve_clock,
    formula_visibility,
    overlap_visibility,
    p_plus,
    planck_time,
    proper_time,
    proper_time_offset,
    run_clock_scenario,
)
from simulator.services.dynamics import PointMass, PointMassPotential
from simulator.services.state_core import UnitSystem

from .factories import NATURAL_UNITS, fixture

UNITS = UnitSystem.codata()


class ClockSpecTests(SimpleTestCase):

    def test_for_duration(self):
        spec = ClockSpec.for_duration(2.0, UNITS)
        assert_allclose(spec.gap(), math.pi * UNITS.hbar)
        self.assertEqual(spec.E0, 0.0)

    def test_equal_levels_rejected(self):
        with self.assertRaises(ValueError):
            ClockSpec(1.0, 1.0)

    def test_initial_state_must_be_unit_norm(self):
        with self.assertRaises(ValueError):
            ClockSpec(0.0, 1.0, (1.0, 1.0))


class ProperTimeTests(SimpleTestCase):

    def test_planck_time(self):
        assert_allclose(planck_time(UNITS), 5.391247e-44, rtol=1e-5)

    def test_offset_is_potential_over_c_squared(self):
        pot = PointMassPotential([PointMass([0.0], 1e-8)], UNITS.G)
        offset = proper_time_offset(pot, [5e-5], 1.0, UNITS)
        assert_allclose(offset, -UNITS.G * 1e-8 / (5e-5 * UNITS.c ** 2))
        self.assertEqual(proper_time(pot, [5e-5], 1.0, UNITS), 1.0 + offset)

    def test_strong_field(self):
        pot = PointMassPotential([PointMass([0.0], 1.0)], 1.0)
        with self.assertRaises(StrongField):
            proper_time_offset(pot, [1.0], 1.0, UnitSystem(G=1.0, c=1.0, hbar=1.0))

    def test_full_period_returns_initial_state(self):
        spec = ClockSpec.for_duration(1.0, UNITS)
        evolved = evolve_clock(spec, 1.0, UNITS)
        self.assertAlmostEqual(overlap_visibility(np.array(PLUS_STATE), evolved), 1.0, places=12)

    def test_quarter_turn_visibility(self):
        spec = ClockSpec(0.0, 1.0)
        first = evolve_clock(spec, 0.0, NATURAL_UNITS)
        second = evolve_clock(spec, 0.0, NATURAL_UNITS, offset=math.pi / 2)
        self.assertAlmostEqual(overlap_visibility(first, second), 0.5)
        self.assertAlmostEqual(formula_visibility(spec, math.pi / 2, NATURAL_UNITS), 0.5)

    def test_orthogonal_states(self):
        minus = np.array([1.0, -1.0]) / math.sqrt(2.0)
        self.assertAlmostEqual(overlap_visibility(np.array(PLUS_STATE), minus), 0.0)

    def test_p_plus_without_mass(self):
        spec = ClockSpec.for_duration(1.0, UNITS)
        self.assertAlmostEqual(p_plus(spec, 0.0, 1.0, 1.0, UNITS), 1.0, places=12)
        half = p_plus(spec, 0.0, 1.0, 0.5, UNITS)
        self.assertAlmostEqual(half, 0.0, places=12)


class ClockScenarioTests(SimpleTestCase):
    """Clock 50 um from a 1e-8 kg sphere whose position is superposed by 5 um."""

    def setUp(self):
        self.scenario = load_scenario(fixture('clock.scn'))
        self.final, self.report = run_clock_scenario(
            self.scenario.state, self.scenario.duration, self.scenario.units, self.scenario.clock
        )

    def test_time_dilation_difference(self):
        assert_allclose(self.report.delta_tau, 1.350e-32, rtol=1e-3)
        self.assertGreater(self.report.delta_tau, 0.0)
        self.assertTrue(self.report.exceeds_planck)

    def test_branch_offsets(self):
        near = -UNITS.G * 1e-8 / (5e-5 * UNITS.c ** 2)
        far = -UNITS.G * 1e-8 / (5.5e-5 * UNITS.c ** 2)
        assert_allclose(self.report.offsets, [near, far], rtol=1e-6)
        assert_allclose(self.report.max_delta_tau, self.report.delta_tau)

    def test_visibility_stays_near_one(self):
        self.assertAlmostEqual(self.report.visibility, 1.0, places=12)
        self.assertAlmostEqual(self.report.formula_visibility, 1.0, places=12)

    def test_state_returns_to_frame_r(self):
        self.assertEqual(self.final.frame, 'R1')
        assert_allclose(self.final.positions_of('C'), self.scenario.state.positions_of('C'), atol=1e-12)
        assert_allclose(np.abs(self.final.amplitudes), np.abs(self.scenario.state.amplitudes))
        for branch in self.final.branches:
            self.assertAlmostEqual(float(np.linalg.norm(branch.clock_internal['C'])), 1.0)

    def test_missing_clock(self):
        fig5 = load_scenario(fixture('fig5.scn'))
        with self.assertRaises(ValueError):
            run_clock_scenario(fig5.state, 1.0, UNITS)
