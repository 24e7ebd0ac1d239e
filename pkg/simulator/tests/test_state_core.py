"""
Tests for branch-superposition states
"""

from dataclasses import replace

from django.test import SimpleTestCase
from hypothesis import given, strategies as st
import numpy as np
from numpy.testing import assert_allclose

from simulator.exceptions import AllZeroAmplitudes, IndexOutOfRange, RegistryMismatch, UnknownSystem
from simulator.services.state_core import (
    Branch,
    BranchState,
    SystemId,
    SystemKind,
    SystemRegistry,
    UnitSystem,
    inner_product,
    is_definite,
    is_normalized,
    merge_branches,
    normalize,
    relative_distances,
)

from .factories import line_state, registry, system


class SystemRegistryTests(SimpleTestCase):

    def test_lookup_by_label_and_id(self):
        systems = registry(system('R1', SystemKind.REFERENCE), system('M1', SystemKind.MASS, 2.0))
        self.assertEqual(systems.get('M1').mass, 2.0)
        self.assertEqual(systems.get(SystemId('M1', SystemKind.MASS)).label, 'M1')
        self.assertIn('R1', systems)
        self.assertEqual(systems.labels, ('R1', 'M1'))

    def test_unknown_label_raises(self):
        systems = registry(system('R1', SystemKind.REFERENCE))
        with self.assertRaises(UnknownSystem):
            systems.get('M7')

    def test_duplicate_labels_rejected(self):
        with self.assertRaises(ValueError):
            registry(system('M1', SystemKind.MASS, 1.0), system('M1', SystemKind.MASS, 1.0))

    def test_mass_needs_positive_mass(self):
        with self.assertRaises(ValueError):
            registry(system('M1', SystemKind.MASS, 0.0))

    def test_bad_role_token(self):
        with self.assertRaises(ValueError):
            SystemId('X1', SystemKind.MASS)

    def test_positioned_labels_skip_ancilla(self):
        systems = registry(system('R1', SystemKind.REFERENCE), system('A', SystemKind.ANCILLA))
        self.assertEqual(systems.positioned_labels(), ('R1',))


class UnitSystemTests(SimpleTestCase):

    def test_codata_values(self):
        units = UnitSystem.codata()
        self.assertAlmostEqual(units.G, 6.6743e-11, delta=1e-15)
        self.assertEqual(units.c, 299792458.0)

    def test_constants_must_be_positive(self):
        with self.assertRaises(ValueError):
            UnitSystem(G=1.0, c=0.0, hbar=1.0)


class BranchStateTests(SimpleTestCase):

    def test_frame_must_sit_at_origin(self):
        systems = registry(system('R1', SystemKind.REFERENCE), system('M1', SystemKind.MASS, 1.0))
        with self.assertRaises(ValueError):
            BranchState(systems, [Branch(1.0, {'R1': [1.0], 'M1': [2.0]})], 'R1')

    def test_mixed_dimensions_rejected(self):
        with self.assertRaises(ValueError):
            Branch(1.0, {'R1': [0.0], 'M1': [1.0, 2.0]})

    def test_positions_are_read_only(self):
        state = line_state([1.0], [2.0])
        with self.assertRaises(ValueError):
            state.branches[0].positions['M1'][0] = 5.0

    def test_positions_of(self):
        state = line_state([1.0, 1.5], [2.0, 2.0])
        assert_allclose(state.positions_of('M1'), [[1.0], [1.5]])


class OperationTests(SimpleTestCase):

    def test_normalize(self):
        state = line_state([1.0, 2.0], [3.0, 3.0])
        raw = state.with_branches(replace(b, amplitude=a) for b, a in zip(state.branches, [3.0, 4.0]))
        normalized = normalize(raw)
        assert_allclose(normalized.amplitudes, [0.6, 0.8])
        self.assertTrue(is_normalized(normalized))

    def test_normalize_all_zero(self):
        state = line_state([1.0], [3.0])
        with self.assertRaises(AllZeroAmplitudes):
            normalize(state.with_branches([replace(state.branches[0], amplitude=0.0)]))

    def test_is_definite(self):
        state = line_state([1.0, 2.0], [3.0, 3.0])
        self.assertTrue(is_definite(state, ['S']))
        self.assertFalse(is_definite(state, ['M1']))
        self.assertTrue(is_definite(state, ['M1'], tol=1.5))

    def test_relative_distances(self):
        state = line_state([1.0, 2.0], [3.0, 3.5])
        distances = relative_distances(state, 1)
        self.assertEqual(distances[('M1', 'S')], 1.5)
        self.assertEqual(distances[('S', 'M1')], 1.5)
        self.assertEqual(distances[('S', 'S')], 0.0)

    def test_relative_distances_index_out_of_range(self):
        with self.assertRaises(IndexOutOfRange):
            relative_distances(line_state([1.0], [2.0]), 3)

    def test_merge_adds_amplitudes_of_equal_configurations(self):
        state = line_state([1.0, 1.0, 2.0], [3.0, 3.0, 3.0])
        merged = merge_branches(state)
        self.assertEqual(len(merged.branches), 2)
        assert_allclose(abs(merged.branches[0].amplitude), 2 / np.sqrt(3))

    def test_inner_product_of_distinct_branches(self):
        state = line_state([1.0, 2.0], [3.0, 3.0])
        self.assertAlmostEqual(inner_product(state, state), 1.0)
        only_first = line_state([1.0], [3.0])
        self.assertAlmostEqual(abs(inner_product(state, only_first)) ** 2, 0.5)

    def test_inner_product_registry_mismatch(self):
        other = BranchState(
            registry(system('R1', SystemKind.REFERENCE)), [Branch(1.0, {'R1': [0.0]})], 'R1'
        )
        with self.assertRaises(RegistryMismatch):
            inner_product(line_state([1.0], [2.0]), other)

    @given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                    min_size=1, max_size=6))
    def test_normalize_yields_unit_norm(self, amplitudes):
        if not any(abs(a) > 1e-6 for a in amplitudes):
            return
        positions = [float(i) + 1.0 for i in range(len(amplitudes))]
        state = line_state(positions, [10.0] * len(amplitudes))
        raw = state.with_branches(replace(b, amplitude=a) for b, a in zip(state.branches, amplitudes))
        self.assertTrue(is_normalized(normalize(raw)))
