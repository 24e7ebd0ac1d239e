"""
Tests for quantum reference frame changes
"""

from itertools import combinations
import math

from django.test import SimpleTestCase
from hypothesis import assume, given, settings as hypothesis_settings, strategies as st
import numpy as np
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from simulator.exceptions import NotRigidlyRelated, NonInvertibleMap, TagMissing, TransformError, ZeroVector
from simulator.scenarios import load_scenario
from simulator.services.qrf_transforms import (
    RigidMap,
    align_branches,
    ancilla_transform,
    ancilla_transform_inverse,
    from_mass_frame,
    mass_frame_maps,
    qrf_shift_one_mass,
    qrf_supp1,
    rigid_map_between,
    rotation_from_vectors,
    rotation_matrix,
    s_r_to_m,
    s_r_to_m_inverse,
    t_rel,
    t_rel_inverse,
    to_mass_frame,
)
from simulator.services.state_core import Branch, BranchState, SystemKind, is_definite

from .factories import fixture, line_state, registry, system

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
MASSES = ('M1', 'M2', 'M3', 'M4')


def rigid_family(dimension, mass_count, branch_count, seed):
    """Branches holding one random mass configuration under random proper rigid motions."""
    rng = np.random.default_rng(seed)
    labels = [f'M{n}' for n in range(1, mass_count + 1)]
    specs = [system('R1', SystemKind.REFERENCE), system('R2', SystemKind.REFERENCE)]
    reference = {'R1': np.zeros(dimension), 'R2': np.eye(dimension)[0]}
    if dimension == 3:
        specs.append(system('R3', SystemKind.REFERENCE))
        reference['R3'] = np.eye(3)[1]
    specs += [system(label, SystemKind.MASS, float(n)) for n, label in enumerate(labels, start=1)]
    specs.append(system('S', SystemKind.PROBE, 1e-3))

    masses = rng.uniform(-5.0, 5.0, (mass_count, dimension))
    probe = rng.uniform(-5.0, 5.0, dimension)
    amplitudes = rng.normal(size=branch_count) + 1j * rng.normal(size=branch_count)
    amplitudes /= np.linalg.norm(amplitudes)
    branches = []
    for index, amplitude in enumerate(amplitudes):
        if index == 0:
            rotation = np.eye(dimension)
        elif dimension == 2:
            theta = rng.uniform(-math.pi, math.pi)
            rotation = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        else:
            rotation = Rotation.random(random_state=rng).as_matrix()
        placed = masses @ rotation.T + rng.uniform(-5.0, 5.0, dimension)
        positions = dict(reference, S=probe)
        positions.update(zip(labels, placed))
        branches.append(Branch(amplitude, positions))
    return BranchState(registry(*specs), branches, 'R1')


def well_conditioned(state, mass_count) -> bool:
    """Mass axes far from degenerate and the first axis far from antiparallel to R2."""
    axis_count = min(mass_count - 1, state.dimension)
    for branch in state.branches:
        origin = branch.position('M1')
        axes = np.column_stack([branch.position(f'M{n}') - origin for n in range(2, axis_count + 2)])
        if np.linalg.svd(axes, compute_uv=False).min() < 0.5:
            return False
        if axes[0, 0] / np.linalg.norm(axes[:, 0]) < -0.9:
            return False
    return True


def pairwise_distances(branch, labels) -> np.ndarray:
    return np.array([np.linalg.norm(branch.position(p) - branch.position(q)) for p, q in combinations(labels, 2)])


class RotationTests(SimpleTestCase):

    def test_planar_rotation_aligns_vector(self):
        spec = rotation_from_vectors([1.0, 0.0], [1.0, 1.0])
        self.assertAlmostEqual(spec.angle, math.pi / 4)
        assert_allclose(rotation_matrix(spec) @ [1.0, 1.0], [SQRT2, 0.0], atol=1e-15)

    def test_antiparallel_planar_angle_is_pi(self):
        self.assertEqual(rotation_from_vectors([1.0, 0.0], [-2.0, 0.0]).angle, math.pi)

    def test_spatial_rotation_aligns_vector(self):
        a = np.array([0.3, -1.2, 2.0])
        spec = rotation_from_vectors([0.0, 0.0, 1.0], a)
        rotated = rotation_matrix(spec) @ a
        assert_allclose(rotated, [0.0, 0.0, np.linalg.norm(a)], atol=1e-14)

    def test_parallel_spatial_vectors_get_an_axis(self):
        spec = rotation_from_vectors([1.0, 0.0, 0.0], [3.0, 0.0, 0.0])
        self.assertEqual(spec.angle, 0.0)
        self.assertAlmostEqual(float(np.dot(spec.axis, [1.0, 0.0, 0.0])), 0.0)
        antiparallel = rotation_from_vectors([1.0, 0.0, 0.0], [-3.0, 0.0, 0.0])
        assert_allclose(rotation_matrix(antiparallel) @ [-3.0, 0.0, 0.0], [3.0, 0.0, 0.0], atol=1e-14)

    def test_zero_vector(self):
        with self.assertRaises(ZeroVector):
            rotation_from_vectors([1.0, 0.0], [0.0, 0.0])


class RigidMapTests(SimpleTestCase):

    def test_kabsch_recovers_map(self):
        source = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        angle = 0.7
        rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        target = source @ rotation.T + [3.0, -1.0]
        mapping = rigid_map_between(source, target)
        assert_allclose(mapping.rotation, rotation, atol=1e-12)
        assert_allclose(mapping.inverse().apply(target), source, atol=1e-12)

    def test_scaled_configuration_is_not_rigid(self):
        source = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        with self.assertRaises(NotRigidlyRelated):
            rigid_map_between(source, 2.0 * source)

    def test_compose(self):
        first = RigidMap(np.array([[0.0, -1.0], [1.0, 0.0]]), np.array([1.0, 0.0]))
        second = RigidMap(np.eye(2), np.array([0.0, 2.0]))
        point = np.array([0.5, 0.25])
        assert_allclose(second.compose(first).apply(point), second.apply(first.apply(point)))

    def test_singular_map_has_no_inverse(self):
        with self.assertRaises(NonInvertibleMap):
            RigidMap(np.zeros((2, 2)), np.zeros(2)).inverse()


class ControlledShiftTests(SimpleTestCase):

    def test_shift_to_mass_frame(self):
        state = load_scenario(fixture('one_mass.scn')).state
        shifted = qrf_shift_one_mass(state, 'M1')
        self.assertEqual(shifted.frame, 'M1')
        self.assertEqual(shifted.previous_frame, 'R1')
        assert_allclose(shifted.positions_of('S')[:, 0], [1.00005 - 0.99995, 1.00005 - 1.0])
        self.assertTrue(is_definite(shifted, ['M1']))

    def test_shift_round_trip(self):
        state = load_scenario(fixture('one_mass.scn')).state
        restored = qrf_supp1(qrf_shift_one_mass(state, 'M1'), 'R1')
        for label in ('R1', 'M1', 'S'):
            assert_allclose(restored.positions_of(label), state.positions_of(label), atol=1e-15)

    def test_shift_moves_velocities(self):
        systems = registry(
            system('R1', SystemKind.REFERENCE), system('M1', SystemKind.MASS, 1.0),
            system('S', SystemKind.PROBE, 1.0),
        )
        branch = Branch(1.0, {'R1': [0.0], 'M1': [2.0], 'S': [3.0]}, velocities={'M1': [0.5], 'S': [1.5]})
        shifted = qrf_supp1(BranchState(systems, [branch], 'R1'), 'M1')
        assert_allclose(shifted.branches[0].velocity('S'), [1.0])
        assert_allclose(shifted.branches[0].velocity('R1'), [-0.5])

    def test_shift_onto_a_probe_is_refused(self):
        with self.assertRaises(TransformError):
            qrf_shift_one_mass(load_scenario(fixture('one_mass.scn')).state, 'S')


class IsometryTests(SimpleTestCase):
    """Four rigidly related masses; the second branch is the first rotated by 30 degrees."""

    def setUp(self):
        self.state = load_scenario(fixture('four_mass_2d.scn')).state
        self.transformed = s_r_to_m(self.state)

    def test_masses_become_definite(self):
        self.assertEqual(self.transformed.frame, 'M1')
        expected = {
            'M1': [0.0, 0.0],
            'M2': [SQRT2, 0.0],
            'M3': [1 / SQRT2, 1 / SQRT2],
            'M4': [3 / SQRT2, 1 / SQRT2],
        }
        for label, position in expected.items():
            for branch in self.transformed.branches:
                assert_allclose(branch.position(label), position, atol=1e-12)

    def test_reference_and_probe_become_indefinite(self):
        first, second = self.transformed.branches
        assert_allclose(first.position('R2'), [1.0, -1.0], atol=1e-12)
        assert_allclose(second.position('R2'), [(SQRT3 - 1) / 2, (-SQRT3 - 1) / 2], atol=1e-12)
        assert_allclose(first.position('S'), [SQRT2, -SQRT2], atol=1e-12)
        assert_allclose(second.position('S'), [(SQRT3 - 1) / SQRT2, (-SQRT3 - 1) / SQRT2], atol=1e-12)
        assert_allclose(first.position('R1'), [0.0, 0.0], atol=1e-12)

    def test_relative_coordinates(self):
        relative, coordinates = t_rel(self.state)
        self.assertTrue(relative.relative)
        self.assertEqual(len(coordinates), 2)
        assert_allclose(relative.branches[0].position('M2'), [1.0, 1.0])
        # M4 = M1 + (M2 - M1) + (M3 - M1) in every branch
        for branch in relative.branches:
            assert_allclose(branch.position('M4'), [1.0, 1.0], atol=1e-12)
        restored = t_rel_inverse(relative)
        for label in MASSES + ('R2',):
            assert_allclose(restored.positions_of(label), self.state.positions_of(label), atol=1e-12)

    def test_amplitudes_untouched(self):
        assert_allclose(self.transformed.amplitudes, self.state.amplitudes)

    def test_inverse_restores_frame_r(self):
        restored = s_r_to_m_inverse(self.transformed)
        self.assertEqual(restored.frame, 'R1')
        self.assertFalse(restored.relative)
        for label in ('R2', 'S') + MASSES:
            assert_allclose(restored.positions_of(label), self.state.positions_of(label), atol=1e-12)

    def test_mass_frame_maps_agree_with_operator(self):
        for branch, after, mapping in zip(self.state.branches, self.transformed.branches,
                                          mass_frame_maps(self.state)):
            assert_allclose(mapping.apply(branch.position('S')), after.position('S'), atol=1e-12)
            self.assertAlmostEqual(mapping.determinant, 1.0)

    def test_dispatch_uses_isometry(self):
        transformed = to_mass_frame(self.state)
        assert_allclose(transformed.positions_of('S'), self.transformed.positions_of('S'))
        restored = from_mass_frame(transformed)
        assert_allclose(restored.positions_of('S'), self.state.positions_of('S'), atol=1e-12)

    def test_non_rigid_family_rejected(self):
        first, second = self.state.branches
        positions = dict(second.positions)
        positions['M4'] = positions['M4'] + np.array([0.1, 0.0])
        distorted = self.state.with_branches([first, second.with_positions(positions)])
        with self.assertRaises(NotRigidlyRelated):
            s_r_to_m(distorted)

    @hypothesis_settings(max_examples=1000, deadline=None)
    @given(
        dimension=st.sampled_from([2, 3]),
        mass_count=st.integers(3, 6),
        branch_count=st.integers(2, 4),
        seed=st.integers(0, 2 ** 32 - 1),
    )
    def test_round_trip_over_random_rigid_families(self, dimension, mass_count, branch_count, seed):
        state = rigid_family(dimension, mass_count, branch_count, seed)
        assume(well_conditioned(state, mass_count))
        masses = [f'M{n}' for n in range(1, mass_count + 1)]
        transformed = s_r_to_m(state)
        self.assertTrue(is_definite(transformed, masses, 1e-10))

        # R2 is rescaled onto the first mass axis; every other distance is rigid
        kept = [label for label in state.branches[0].positions if label != 'R2']
        for before, after in zip(state.branches, transformed.branches):
            assert_allclose(pairwise_distances(after, kept), pairwise_distances(before, kept), rtol=0, atol=1e-12)

        restored = s_r_to_m_inverse(transformed)
        assert_allclose(restored.amplitudes, state.amplitudes, rtol=0, atol=1e-12)
        for label in state.branches[0].positions:
            assert_allclose(restored.positions_of(label), state.positions_of(label), rtol=0, atol=1e-12)

    def test_three_dimensions_need_an_orientation_particle(self):
        specs = [system('R1', SystemKind.REFERENCE), system('R2', SystemKind.REFERENCE)]
        specs += [system(label, SystemKind.MASS, 1.0) for label in MASSES[:3]]
        first = {'R1': [0.0, 0.0, 0.0], 'R2': [1.0, 0.0, 0.0],
                 'M1': [0.0, 0.0, 0.0], 'M2': [1.0, 0.0, 0.0], 'M3': [0.0, 1.0, 0.0]}
        # Quarter turn about the R1-R2 axis
        second = dict(first, M3=[0.0, 0.0, 1.0])
        branches = [Branch(1 / SQRT2, first), Branch(1 / SQRT2, second)]
        with self.assertRaisesMessage(NotRigidlyRelated, 'R3'):
            s_r_to_m(BranchState(registry(*specs), branches, 'R1'))

        specs.append(system('R3', SystemKind.REFERENCE))
        branches = [Branch(1 / SQRT2, dict(positions, R3=[0.0, 1.0, 0.0])) for positions in (first, second)]
        transformed = s_r_to_m(BranchState(registry(*specs), branches, 'R1'))
        self.assertTrue(is_definite(transformed, list(MASSES[:3]), 1e-10))


class AncillaTests(SimpleTestCase):

    def tagged_state(self):
        state = load_scenario(fixture('four_mass_2d.scn')).state
        tagged = [branch.with_positions(branch.positions, ancilla_tag=tag)
                  for branch, tag in zip(state.branches, ('up', 'turned'))]
        return state.with_branches(tagged)

    def test_aligned_maps_make_masses_definite(self):
        state = self.tagged_state()
        transformed = ancilla_transform(state, align_branches(state))
        self.assertEqual(transformed.frame, 'M1')
        self.assertTrue(is_definite(transformed, list(MASSES)))
        restored = ancilla_transform_inverse(transformed)
        self.assertEqual(restored.frame, 'R1')
        for label in ('R2', 'S') + MASSES:
            assert_allclose(restored.positions_of(label), state.positions_of(label), atol=1e-12)

    def test_missing_tag(self):
        state = load_scenario(fixture('four_mass_2d.scn')).state
        with self.assertRaises(TagMissing):
            align_branches(state)

    def test_map_must_keep_distances(self):
        state = self.tagged_state()
        maps = align_branches(state)
        maps['turned'] = RigidMap(2.0 * maps['turned'].rotation, maps['turned'].translation)
        with self.assertRaises(NotRigidlyRelated):
            ancilla_transform(state, maps)

    def test_line_state_shift_through_ancilla(self):
        state = line_state([1.0, 2.0], [3.0, 3.0])
        tagged = state.with_branches(
            branch.with_positions(branch.positions, ancilla_tag=index)
            for index, branch in enumerate(state.branches)
        )
        maps = {0: RigidMap(np.eye(1), [-1.0]), 1: RigidMap(np.eye(1), [-2.0])}
        transformed = ancilla_transform(tagged, maps)
        assert_allclose(transformed.positions_of('S')[:, 0], [2.0, 1.0])
