"""
Branch-superposition states for the QRF gravity simulator
Immutable value types (systems, branches, states, units) and the predicates the
transform and dynamics services rely on.
"""

from dataclasses import dataclass, field, replace
from itertools import combinations
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Optional
import logging
import re

from django.conf import settings
from django.db import models
import numpy as np
from scipy import constants

from ..exceptions import (
    AllZeroAmplitudes,
    IndexOutOfRange,
    RegistryMismatch,
    UnknownSystem,
)

logger = logging.getLogger(__name__)

LABEL_PATTERN = re.compile(r'^(R[123]|M[1-9][0-9]*|S|C|A)$')
NORM_TOLERANCE = 1e-12


def default_position_tolerance() -> float:
    return getattr(settings, 'QRF_POSITION_TOLERANCE', 1e-9)


# =============================================================================
# SYSTEMS
# =============================================================================

class SystemKind(models.TextChoices):
    REFERENCE = 'reference', 'Reference'
    MASS = 'mass', 'Mass'
    PROBE = 'probe', 'Probe'
    CLOCK = 'clock', 'Clock'
    ANCILLA = 'ancilla', 'Ancilla'


@dataclass(frozen=True)
class SystemId:
    label: str
    kind: str

    def __post_init__(self):
        if not LABEL_PATTERN.match(self.label):
            raise ValueError(f"'{self.label}' is not a system role token")
        if self.kind not in SystemKind.values:
            raise ValueError(f"unknown system kind '{self.kind}'")

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class SystemSpec:
    """A registered system and its metadata (mass in kg where it applies)."""
    id: SystemId
    mass: Optional[float] = None

    @property
    def label(self) -> str:
        return self.id.label

    @property
    def kind(self) -> str:
        return self.id.kind


class SystemRegistry:
    """
    Ordered, label-unique collection of the systems taking part in a scenario.

    Masses must carry a strictly positive mass value, and so must the probe.
    Lookups accept a label string or a SystemId.
    """

    def __init__(self, systems: Iterable[SystemSpec]):
        systems = tuple(systems)
        labels = [spec.label for spec in systems]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate system labels in {labels}")
        for spec in systems:
            if spec.kind in (SystemKind.MASS, SystemKind.PROBE):
                if spec.mass is None or not spec.mass > 0:
                    raise ValueError(f"{spec.kind} {spec.label} needs a strictly positive mass")
        self._systems = systems
        self._by_label = {spec.label: spec for spec in systems}

    def __iter__(self):
        return iter(self._systems)

    def __len__(self):
        return len(self._systems)

    def __contains__(self, item):
        return _label(item) in self._by_label

    def __eq__(self, other):
        return isinstance(other, SystemRegistry) and self._systems == other._systems

    def __hash__(self):
        return hash(self._systems)

    def __repr__(self):
        return f"SystemRegistry({', '.join(self.labels)})"

    @property
    def labels(self) -> tuple:
        return tuple(spec.label for spec in self._systems)

    def get(self, item) -> SystemSpec:
        try:
            return self._by_label[_label(item)]
        except KeyError:
            raise UnknownSystem(f"system '{_label(item)}' is not registered") from None

    def of_kind(self, kind) -> tuple:
        return tuple(spec for spec in self._systems if spec.kind == kind)

    @property
    def masses(self) -> tuple:
        return self.of_kind(SystemKind.MASS)

    @property
    def probe(self) -> Optional[SystemSpec]:
        probes = self.of_kind(SystemKind.PROBE)
        return probes[0] if probes else None

    @property
    def clocks(self) -> tuple:
        return self.of_kind(SystemKind.CLOCK)

    def positioned_labels(self) -> tuple:
        """Labels of systems that carry a position (the ancilla does not)."""
        return tuple(spec.label for spec in self._systems if spec.kind != SystemKind.ANCILLA)


def _label(item) -> str:
    return item.label if isinstance(item, (SystemId, SystemSpec)) else str(item)


# =============================================================================
# UNITS
# =============================================================================

@dataclass(frozen=True)
class UnitSystem:
    G: float
    c: float
    hbar: float

    def __post_init__(self):
        for name in ('G', 'c', 'hbar'):
            if not getattr(self, name) > 0:
                raise ValueError(f"unit constant {name} must be strictly positive")

    @classmethod
    def codata(cls) -> 'UnitSystem':
        return cls(G=constants.G, c=constants.c, hbar=constants.hbar)


# =============================================================================
# BRANCHES AND STATES
# =============================================================================

def _frozen_vectors(mapping) -> Mapping[str, np.ndarray]:
    frozen = {}
    for key, value in (mapping or {}).items():
        array = np.array(value, dtype=float).reshape(-1)
        array.setflags(write=False)
        frozen[_label(key)] = array
    return MappingProxyType(frozen)


@dataclass(frozen=True, eq=False)
class Branch:
    """One semi-classical branch: an amplitude and a definite position per system."""
    amplitude: complex
    positions: Mapping[str, np.ndarray]
    clock_internal: Mapping[str, np.ndarray] = field(default_factory=dict)
    ancilla_tag: Optional[Any] = None
    velocities: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'amplitude', complex(self.amplitude))
        object.__setattr__(self, 'positions', _frozen_vectors(self.positions))
        object.__setattr__(self, 'velocities', _frozen_vectors(self.velocities))
        internal = {}
        for key, value in (self.clock_internal or {}).items():
            pair = np.array(value, dtype=complex).reshape(2)
            if abs(np.linalg.norm(pair) - 1.0) > NORM_TOLERANCE:
                raise ValueError(f"clock state of {_label(key)} is not unit norm")
            pair.setflags(write=False)
            internal[_label(key)] = pair
        object.__setattr__(self, 'clock_internal', MappingProxyType(internal))
        dims = {vector.shape[0] for vector in self.positions.values()}
        dims |= {vector.shape[0] for vector in self.velocities.values()}
        if len(dims) > 1:
            raise ValueError(f"position vectors of mixed dimension {sorted(dims)}")
        if dims and not dims <= {1, 2, 3}:
            raise ValueError(f"dimension {dims.pop()} is not 1, 2 or 3")

    @property
    def dimension(self) -> int:
        return next(iter(self.positions.values())).shape[0]

    def position(self, label) -> np.ndarray:
        try:
            return self.positions[_label(label)]
        except KeyError:
            raise UnknownSystem(f"branch has no position for '{_label(label)}'") from None

    def velocity(self, label) -> np.ndarray:
        velocity = self.velocities.get(_label(label))
        return velocity if velocity is not None else np.zeros(self.dimension)

    def with_positions(self, positions, velocities=None, **changes) -> 'Branch':
        changes['positions'] = positions
        if velocities is not None:
            changes['velocities'] = velocities
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class BranchState:
    """
    Superposition of semi-classical branches over a registry.

    The frame system sits at the origin of every branch. Normalization is not
    forced at construction so that raw scenario amplitudes can be normalized
    explicitly; see normalize().
    """
    registry: SystemRegistry
    branches: tuple
    frame: str
    relative: bool = False
    reference_axes: Optional[tuple] = None
    ancilla_maps: Optional[Mapping] = None
    previous_frame: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'branches', tuple(self.branches))
        object.__setattr__(self, 'frame', _label(self.frame))
        if not self.branches:
            raise ValueError("a state needs at least one branch")
        self.registry.get(self.frame)
        dims = {branch.dimension for branch in self.branches}
        if len(dims) != 1:
            raise ValueError(f"branches disagree on dimension: {sorted(dims)}")
        for index, branch in enumerate(self.branches):
            for label in branch.positions:
                self.registry.get(label)
            if np.any(branch.position(self.frame) != 0.0):
                raise ValueError(
                    f"frame system {self.frame} is not at the origin in branch {index}"
                )

    @property
    def dimension(self) -> int:
        return self.branches[0].dimension

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([branch.amplitude for branch in self.branches], dtype=complex)

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def positions_of(self, label) -> np.ndarray:
        """Array (K, D) of one system's position across branches."""
        return np.array([branch.position(label) for branch in self.branches])

    def with_branches(self, branches, **changes) -> 'BranchState':
        return replace(self, branches=tuple(branches), **changes)


# =============================================================================
# OPERATIONS
# =============================================================================

def normalize(state: BranchState) -> BranchState:
    amplitudes = state.amplitudes
    norm = float(np.sqrt(np.sum(np.abs(amplitudes) ** 2)))
    if norm == 0.0:
        raise AllZeroAmplitudes("every branch amplitude is zero")
    if norm == 1.0:
        return state
    return state.with_branches(
        replace(branch, amplitude=branch.amplitude / norm) for branch in state.branches
    )


def is_normalized(state: BranchState, tol: float = NORM_TOLERANCE) -> bool:
    return abs(float(np.sum(state.weights)) - 1.0) <= tol


def is_definite(state: BranchState, systems, tol: Optional[float] = None) -> bool:
    """True iff each listed system has the same position in every branch (componentwise within tol)."""
    tol = default_position_tolerance() if tol is None else tol
    for system in systems:
        state.registry.get(system)
        positions = state.positions_of(system)
        if np.any(np.abs(positions - positions[0]) > tol):
            return False
    return True


def relative_distances(state: BranchState, branch_index: int) -> dict:
    if not 0 <= branch_index < len(state.branches):
        raise IndexOutOfRange(
            f"branch {branch_index} out of range for {len(state.branches)} branches"
        )
    branch = state.branches[branch_index]
    labels = [label for label in state.registry.labels if label in branch.positions]
    distances = {(label, label): 0.0 for label in labels}
    for first, second in combinations(labels, 2):
        distance = float(np.linalg.norm(branch.position(first) - branch.position(second)))
        distances[(first, second)] = distance
        distances[(second, first)] = distance
    return distances


def _same_configuration(first: Branch, second: Branch, pos_tol: float) -> bool:
    if first.ancilla_tag != second.ancilla_tag:
        return False
    if first.positions.keys() != second.positions.keys():
        return False
    return all(
        np.all(np.abs(first.positions[label] - second.positions[label]) <= pos_tol)
        for label in first.positions
    )


def _same_clocks(first: Branch, second: Branch) -> bool:
    if first.clock_internal.keys() != second.clock_internal.keys():
        return False
    return all(
        np.allclose(first.clock_internal[label], second.clock_internal[label], rtol=0, atol=1e-12)
        for label in first.clock_internal
    )


def merge_branches(state: BranchState, pos_tol: Optional[float] = None) -> BranchState:
    """Add the amplitudes of branches that describe the same configuration."""
    pos_tol = default_position_tolerance() if pos_tol is None else pos_tol
    merged = []
    for branch in state.branches:
        for index, kept in enumerate(merged):
            if _same_configuration(kept, branch, pos_tol) and _same_clocks(kept, branch):
                merged[index] = replace(kept, amplitude=kept.amplitude + branch.amplitude)
                break
        else:
            merged.append(branch)
    if len(merged) != len(state.branches):
        logger.debug(f"Merged {len(state.branches)} branches into {len(merged)}")
    return state.with_branches(merged)


def inner_product(a: BranchState, b: BranchState, pos_tol: Optional[float] = None) -> complex:
    pos_tol = default_position_tolerance() if pos_tol is None else pos_tol
    if a.registry != b.registry or a.dimension != b.dimension:
        raise RegistryMismatch("states are defined over different registries or dimensions")
    a = merge_branches(a, pos_tol)
    b = merge_branches(b, pos_tol)
    total = 0j
    for left in a.branches:
        for right in b.branches:
            if not _same_configuration(left, right, pos_tol):
                continue
            overlap = left.amplitude.conjugate() * right.amplitude
            for label, internal in left.clock_internal.items():
                other = right.clock_internal.get(label)
                if other is not None:
                    overlap *= complex(np.vdot(internal, other))
            total += overlap
    return total
