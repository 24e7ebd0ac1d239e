"""
Tests for the covariant, semi-classical and collapse predictions
"""

from django.test import SimpleTestCase
import numpy as np
from numpy.testing import assert_allclose

from simulator.scenarios import load_scenario
from simulator.services.model_compare import (
    GravityModel,
    ModelPrediction,
    compare_models,
    covariance_violation_report,
    evolve_in_frame_r,
    mean_field_potential,
    predict,
    predict_collapse,
    predict_covariant,
    predict_semiclassical,
)

from .factories import fixture


class SymmetricSuperpositionTests(SimpleTestCase):
    """Probe halfway between the two positions of a 10 kg mass, 0.25 m either side."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scenario = load_scenario(fixture('fig5.scn'))
        cls.args = (cls.scenario.state, cls.scenario.duration, cls.scenario.dt, cls.scenario.units)
        cls.predictions = compare_models(*cls.args, cls.scenario.models, seed=cls.scenario.seed)
        # Newtonian fall from rest over the duration, to first order
        acceleration = cls.scenario.units.G * 10.0 / 0.25 ** 2
        cls.fall = 0.5 * acceleration * cls.scenario.duration ** 2

    def test_models_in_request_order(self):
        self.assertEqual(list(self.predictions), ['semiclassical', 'collapse', 'covariant'])

    def test_entanglement_flags(self):
        flags = [prediction.entanglement_flag for prediction in self.predictions.values()]
        self.assertEqual(flags, [False, False, True])

    def test_semiclassical_probe_does_not_move(self):
        prediction = self.predictions['semiclassical']
        for traj in prediction.trajectories:
            assert_allclose(traj.positions[:, 0], 1.0, atol=0)
        gradient = mean_field_potential(self.scenario.state, self.scenario.units).gradient([1.0])
        assert_allclose(gradient, [0.0], atol=0)

    def test_semiclassical_prediction(self):
        prediction = predict_semiclassical(*self.args)
        self.assertEqual(prediction.model, GravityModel.SEMICLASSICAL)
        self.assertFalse(prediction.entanglement_flag)
        assert_allclose(prediction.weights, [0.5, 0.5])
        for traj, other in zip(prediction.trajectories, self.predictions['semiclassical'].trajectories):
            assert_allclose(traj.positions, other.positions)

    def test_covariant_branches_fall_toward_their_mass(self):
        first, second = self.predictions['covariant'].trajectories
        assert_allclose(1.0 - first.final_position[0], self.fall, rtol=1e-2)
        assert_allclose(second.final_position[0] - 1.0, self.fall, rtol=1e-2)
        assert_allclose(first.final_position[0] + second.final_position[0], 2.0, atol=1e-12)

    def test_covariant_matches_frame_r_evolution(self):
        _, direct = evolve_in_frame_r(*self.args)
        for traj, reference in zip(self.predictions['covariant'].trajectories, direct):
            assert_allclose(traj.positions, reference.positions, atol=1e-11)

    def test_collapse_enumerates_outcomes(self):
        prediction = self.predictions['collapse']
        self.assertEqual(prediction.outcomes, [0, 1])
        assert_allclose(prediction.weights, [0.5, 0.5])
        covariant = self.predictions['covariant'].trajectories
        for traj, index in zip(prediction.trajectories, prediction.outcomes):
            assert_allclose(traj.positions, covariant[index].positions, atol=1e-10)
        self.assertEqual(len(prediction.final_states[0].branches), 1)

    def test_collapse_sampling_is_seeded(self):
        first = predict_collapse(*self.args, seed=7, samples=200)
        second = predict_collapse(*self.args, seed=7, samples=200)
        self.assertEqual(first.weights, second.weights)
        self.assertAlmostEqual(sum(first.weights), 1.0)
        for weight in first.weights:
            self.assertTrue(0.3 < weight < 0.7)

    def test_collapse_after_delay(self):
        prediction = predict_collapse(*self.args, delay=30.0)
        traj = prediction.trajectories[0]
        self.assertEqual(traj.times[-1], 60.0)
        self.assertEqual(traj.times.size, 1201)
        self.assertTrue(np.all(np.diff(traj.times) > 0))

    def test_covariance_report(self):
        report = covariance_violation_report(*self.args, self.scenario.models, seed=self.scenario.seed)
        self.assertLess(report.for_model('covariant').positional, 1e-11)
        self.assertLess(report.for_model('covariant').phase, 1e-4)
        assert_allclose(report.for_model('semiclassical').positional, self.fall, rtol=1e-2)
        self.assertLess(report.for_model('collapse').positional, 1e-10)
        self.assertAlmostEqual(report.for_model('collapse').coherence, 1.0)


class PredictionTests(SimpleTestCase):

    def test_weights_must_sum_to_one(self):
        with self.assertRaises(ValueError):
            ModelPrediction(GravityModel.COVARIANT, [], [0.5, 0.4], False, [])

    def test_unknown_model(self):
        scenario = load_scenario(fixture('one_mass.scn'))
        with self.assertRaises(ValueError):
            predict('newtonian', scenario.state, 1.0, 0.1, scenario.units)

    def test_covariant_prediction_in_three_dimensions(self):
        scenario = load_scenario(fixture('one_mass.scn'))
        prediction = predict_covariant(scenario.state, scenario.duration, scenario.dt, scenario.units)
        final = prediction.final_state
        self.assertEqual(final.frame, 'R1')
        first, second = prediction.trajectories
        # S sits 100 um from the mass in the first branch and 50 um in the second
        self.assertLess(first.final_position[0], 1.00005)
        self.assertLess(second.final_position[0], first.final_position[0])
        assert_allclose(final.positions_of('S')[:, 0], [first.final_position[0], second.final_position[0]])
        assert_allclose(np.abs(final.amplitudes), np.abs(scenario.state.amplitudes))
