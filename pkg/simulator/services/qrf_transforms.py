"""
Quantum reference frame changes for branch-superposition states
Demonstrates: controlled shifts, the staged N-mass isometry operator, ancilla-controlled maps

Every operator acts branchwise: each branch is a classical configuration, so a
QRF change is a classical coordinate change conditioned on that branch. The
amplitudes pass through untouched (Jacobians are unity for finitely many
delta-normalized branches).
"""

from dataclasses import dataclass, replace
from itertools import combinations
from types import MappingProxyType
from typing import Mapping, Optional
import logging
import math

from django.conf import settings
import numpy as np

from ..exceptions import (
    DegenerateAxis,
    NonDefiniteResult,
    NonInvertibleMap,
    NotRigidlyRelated,
    SingularDecomposition,
    TagMissing,
    TransformError,
    ZeroVector,
)
from .state_core import (
    BranchState,
    SystemKind,
    default_position_tolerance,
    is_definite,
)

logger = logging.getLogger(__name__)

DETERMINANT_THRESHOLD = 1e-12
PARALLEL_THRESHOLD = 1e-15


def default_rigidity_tolerance() -> float:
    return getattr(settings, 'QRF_RIGIDITY_TOLERANCE', 1e-9)


# =============================================================================
# ROTATIONS
# =============================================================================

@dataclass(frozen=True, eq=False)
class RotationSpec:
    """
    Rotation carrying the direction of a onto the direction of e1.

    angle is θ(e1, a). In D = 3 the axis is u = e1×a/|e1×a|; in D = 2 the
    axis is the implicit out-of-plane direction and the angle is signed.
    The rotation applied is R(−θ) about u.
    """
    angle: float
    axis: Optional[np.ndarray] = None
    dimension: int = 3

    def __post_init__(self):
        if not -math.pi < self.angle <= math.pi:
            raise ValueError(f"rotation angle {self.angle} outside (-pi, pi]")
        if self.dimension == 3:
            axis = np.asarray(self.axis, dtype=float)
            if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
                raise ValueError("rotation axis must be a unit vector")
            object.__setattr__(self, 'axis', axis)


def _unit(vector: np.ndarray, name: str = 'vector') -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise ZeroVector(f"{name} has zero length")
    return np.asarray(vector, dtype=float) / norm


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Right-handed rotation by angle about a unit axis (Rodrigues)."""
    kx, ky, kz = axis
    cross = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + math.sin(angle) * cross + (1.0 - math.cos(angle)) * (cross @ cross)


def _orthogonal_axis(direction: np.ndarray) -> np.ndarray:
    """Lexicographically smallest unit vector orthogonal to a unit direction."""
    for basis in np.eye(3):
        projected = basis - np.dot(basis, direction) * direction
        norm = np.linalg.norm(projected)
        if norm > 1e-12:
            return -projected / norm
    raise DegenerateAxis("no orthogonal axis found")


def rotation_from_vectors(e1, a) -> RotationSpec:
    e1 = np.asarray(e1, dtype=float)
    a = np.asarray(a, dtype=float)
    if e1.shape != a.shape or e1.shape[0] not in (2, 3):
        raise ValueError("rotation_from_vectors needs two vectors of dimension 2 or 3")
    u_e1 = _unit(e1, 'e1')
    u_a = _unit(a, 'a')
    cosine = float(np.dot(u_e1, u_a))

    if e1.shape[0] == 2:
        sine = float(u_e1[0] * u_a[1] - u_e1[1] * u_a[0])
        angle = math.atan2(sine, cosine)
        if angle == -math.pi:
            angle = math.pi
        return RotationSpec(angle=angle, dimension=2)

    cross = np.cross(u_e1, u_a)
    sine = float(np.linalg.norm(cross))
    if sine <= PARALLEL_THRESHOLD:
        # Parallel or antiparallel: the cross product gives no axis
        angle = 0.0 if cosine > 0 else math.pi
        return RotationSpec(angle=angle, axis=_orthogonal_axis(u_e1), dimension=3)
    return RotationSpec(angle=math.atan2(sine, cosine), axis=cross / sine, dimension=3)


def rotation_matrix(spec: RotationSpec) -> np.ndarray:
    if spec.dimension == 2:
        cosine, sine = math.cos(spec.angle), math.sin(spec.angle)
        return np.array([[cosine, sine], [-sine, cosine]])
    return _axis_rotation(spec.axis, -spec.angle)


def _alignment(e1, a, b=None, e2=None):
    """
    Rotation Q' taking a onto the e1 direction and, in D = 3 with an
    orientation vector e2, the plane of (a, b) onto the e1-e2 half-plane.

    Returns (Q', T) where T is the twist about e1 so that Q' = T·Q(a).
    """
    base = rotation_matrix(rotation_from_vectors(e1, a))
    dimension = base.shape[0]
    twist = np.eye(dimension)
    if dimension == 3 and e2 is not None and b is not None:
        u_e1 = _unit(e1, 'e1')
        rotated = base @ b
        perpendicular = rotated - np.dot(rotated, u_e1) * u_e1
        if np.linalg.norm(perpendicular) > 1e-12 * max(np.linalg.norm(rotated), 1e-300):
            target = e2 - np.dot(e2, u_e1) * u_e1
            angle = math.atan2(
                float(np.dot(u_e1, np.cross(perpendicular, target))),
                float(np.dot(perpendicular, target)),
            )
            twist = _axis_rotation(u_e1, angle)
    return twist @ base, twist


def _reflect_across_axis(vector: np.ndarray, axis: np.ndarray) -> np.ndarray:
    u_axis = _unit(axis, 'e1')
    return 2.0 * np.dot(vector, u_axis) * u_axis - vector


# =============================================================================
# RIGID MAPS
# =============================================================================

@dataclass(frozen=True, eq=False)
class RigidMap:
    """Coordinate map x -> R x + t."""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'rotation', np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, 'translation', np.asarray(self.translation, dtype=float))

    @classmethod
    def identity(cls, dimension: int) -> 'RigidMap':
        return cls(np.eye(dimension), np.zeros(dimension))

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.rotation))

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def push_velocity(self, velocity) -> np.ndarray:
        return self.rotation @ np.asarray(velocity, dtype=float)

    def inverse(self) -> 'RigidMap':
        if abs(self.determinant) < DETERMINANT_THRESHOLD:
            raise NonInvertibleMap("coordinate map has a vanishing determinant")
        inverse_rotation = np.linalg.inv(self.rotation)
        return RigidMap(inverse_rotation, -inverse_rotation @ self.translation)

    def compose(self, inner: 'RigidMap') -> 'RigidMap':
        """self ∘ inner"""
        return RigidMap(self.rotation @ inner.rotation, self.apply(inner.translation))


def rigid_map_between(source, target, tol: Optional[float] = None) -> RigidMap:
    """
    Proper rigid map taking the source points onto the target points (Kabsch).

    Raises NotRigidlyRelated when the configurations are not congruent.
    """
    source = np.atleast_2d(np.asarray(source, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    tol = default_rigidity_tolerance() if tol is None else tol

    source_center = source.mean(axis=0)
    target_center = target.mean(axis=0)
    covariance = (source - source_center).T @ (target - target_center)
    u, _, vt = np.linalg.svd(covariance)
    sign = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    correction = np.eye(source.shape[1])
    correction[-1, -1] = sign
    rotation = vt.T @ correction @ u.T
    mapping = RigidMap(rotation, target_center - rotation @ source_center)

    scale = max(float(np.max(np.abs(source - source_center))), 1.0)
    residual = float(np.max(np.abs(mapping.apply(source) - target)))
    if residual > tol * scale:
        raise NotRigidlyRelated(f"configurations differ by {residual:.3e} after alignment")
    return mapping


# =============================================================================
# RELATIVE COORDINATES
# =============================================================================

@dataclass(frozen=True, eq=False)
class RelCoords:
    origin: np.ndarray
    axes: tuple
    residuals: Mapping[str, np.ndarray]


def _mass_labels(state: BranchState) -> list:
    return [spec.label for spec in state.registry.masses]


def _axis_count(state: BranchState) -> int:
    return min(len(_mass_labels(state)) - 1, state.dimension)


def _require_relative(state: BranchState, expected: bool):
    if state.relative != expected:
        form = 'relative' if expected else 'absolute'
        raise TransformError(f"operator expects a state in {form} coordinates")


def t_rel(state: BranchState):
    """
    Re-express masses relative to M1: M2.. as axis vectors, later masses as
    coefficients over those axes. R2 is stored relative to R1.
    """
    _require_relative(state, False)
    labels = _mass_labels(state)
    if len(labels) < 2:
        raise TransformError("relative coordinates need at least two masses")
    axis_count = _axis_count(state)
    axis_labels = labels[1:axis_count + 1]
    residual_labels = labels[axis_count + 1:]

    branches, coordinates = [], []
    for index, branch in enumerate(state.branches):
        positions = dict(branch.positions)
        origin = branch.position(labels[0])
        axes = tuple(branch.position(label) - origin for label in axis_labels)
        residuals = {}
        if residual_labels:
            basis = np.column_stack(axes)
            scale = max(float(np.linalg.norm(axis)) for axis in axes)
            if abs(np.linalg.det(basis)) <= DETERMINANT_THRESHOLD * scale ** state.dimension:
                raise SingularDecomposition(
                    f"mass axes are degenerate in branch {index}; cannot decompose "
                    f"{', '.join(residual_labels)}"
                )
            for label in residual_labels:
                residuals[label] = np.linalg.solve(basis, branch.position(label) - origin)
        positions.update(zip(axis_labels, axes))
        positions.update(residuals)
        if 'R2' in positions and 'R1' in positions:
            positions['R2'] = positions['R2'] - positions['R1']
        branches.append(branch.with_positions(positions))
        coordinates.append(RelCoords(origin, axes, MappingProxyType(residuals)))
    return state.with_branches(branches, relative=True), coordinates


def t_rel_inverse(state: BranchState) -> BranchState:
    _require_relative(state, True)
    labels = _mass_labels(state)
    axis_count = _axis_count(state)
    axis_labels = labels[1:axis_count + 1]
    residual_labels = labels[axis_count + 1:]

    branches = []
    for branch in state.branches:
        positions = dict(branch.positions)
        origin = branch.position(labels[0])
        axes = [branch.position(label) for label in axis_labels]
        for label, axis in zip(axis_labels, axes):
            positions[label] = origin + axis
        if residual_labels:
            basis = np.column_stack(axes)
            for label in residual_labels:
                positions[label] = origin + basis @ branch.position(label)
        if 'R2' in positions and 'R1' in positions:
            positions['R2'] = positions['R1'] + positions['R2']
        branches.append(branch.with_positions(positions))
    return state.with_branches(branches, relative=False)


# =============================================================================
# STAGES OF THE N-MASS OPERATOR
# =============================================================================

def _spectator_labels(state: BranchState, branch) -> list:
    fixed = set(_mass_labels(state)) | {'R1', 'R2'}
    return [label for label in branch.positions if label not in fixed]


def _reference_vectors(state: BranchState):
    """Frame-R axis e1 (R2) and, in D = 3, orientation e2 (R3); both must be definite."""
    tol = default_position_tolerance()
    e1 = state.branches[0].position('R2')
    if not is_definite(state, ['R2'], tol):
        raise NotRigidlyRelated("reference axis R2 differs across branches")
    e2 = None
    if state.dimension == 3 and 'R3' in state.registry:
        if not is_definite(state, ['R3'], tol):
            raise NotRigidlyRelated("reference orientation R3 differs across branches")
        e2 = state.branches[0].position('R3') - state.branches[0].position('R1')
        if abs(np.dot(_unit(e1, 'e1'), _unit(e2, 'e2'))) > 1e-9:
            raise DegenerateAxis("R3 must sit orthogonal to the R1-R2 axis")
    return e1, e2


def controlled_shift_rotation(state: BranchState) -> BranchState:
    """
    U stage: conditioned on x1, a (and b), rotate everything by R(−θ(e1, a)),
    shift by the rotated −x1, and rescale R2 to |a|.
    """
    _require_relative(state, True)
    if state.frame != 'R1':
        raise TransformError(f"U stage expects frame R1, got {state.frame}")
    labels = _mass_labels(state)
    axis_labels = labels[1:_axis_count(state) + 1]
    e1, e2 = _reference_vectors(state)
    u_e1 = _unit(e1, 'e1')

    branches = []
    for branch in state.branches:
        origin = branch.position(labels[0])
        a = branch.position(labels[1])
        b = branch.position(labels[2]) if len(axis_labels) > 1 else None
        rotation, twist = _alignment(e1, a, b, e2)
        positions = dict(branch.positions)
        velocities = dict(branch.velocities)
        positions[labels[0]] = rotation @ origin
        positions[labels[1]] = twist @ a
        for label in axis_labels[1:]:
            positions[label] = rotation @ branch.position(label)
        positions['R2'] = float(np.linalg.norm(a)) * u_e1
        shift = rotation @ origin
        for label in _spectator_labels(state, branch):
            positions[label] = rotation @ branch.position(label) - shift
            if label in velocities:
                velocities[label] = rotation @ velocities[label]
        branches.append(branch.with_positions(positions, velocities))

    axes = (np.array(e1),) if e2 is None else (np.array(e1), np.array(e2))
    return state.with_branches(branches, reference_axes=axes)


def controlled_shift_rotation_inverse(state: BranchState) -> BranchState:
    _require_relative(state, True)
    if state.frame != 'R1' or state.reference_axes is None:
        raise NonInvertibleMap("state does not carry the reference axes of a U stage")
    labels = _mass_labels(state)
    axis_labels = labels[1:_axis_count(state) + 1]
    e1 = state.reference_axes[0]
    e2 = state.reference_axes[1] if len(state.reference_axes) > 1 else None
    u_e1 = _unit(e1, 'e1')

    branches = []
    for branch in state.branches:
        shifted_origin = branch.position(labels[0])
        twisted_a = branch.position(labels[1])
        base = rotation_matrix(rotation_from_vectors(e1, twisted_a))
        twist = np.eye(state.dimension)
        if e2 is not None and 'R3' in branch.positions:
            rotated_e2 = base.T @ (branch.position('R3') + shifted_origin)
            angle = math.atan2(
                float(np.dot(u_e1, np.cross(e2, rotated_e2))),
                float(np.dot(e2, rotated_e2)),
            )
            twist = _axis_rotation(u_e1, angle)
        rotation = base @ twist
        origin = rotation.T @ shifted_origin

        positions = dict(branch.positions)
        velocities = dict(branch.velocities)
        positions[labels[0]] = origin
        positions[labels[1]] = twist.T @ twisted_a
        for label in axis_labels[1:]:
            positions[label] = rotation.T @ branch.position(label)
        positions['R2'] = np.array(e1)
        for label in _spectator_labels(state, branch):
            positions[label] = rotation.T @ branch.position(label) + origin
            if label in velocities:
                velocities[label] = rotation.T @ velocities[label]
        branches.append(branch.with_positions(positions, velocities))
    return state.with_branches(branches, reference_axes=None)


def _swap_frames(positions: dict, labels: list) -> dict:
    swapped = dict(positions)
    swapped[labels[0]], swapped['R1'] = positions['R1'], positions[labels[0]]
    swapped[labels[1]], swapped['R2'] = positions['R2'], positions[labels[1]]
    return swapped


def parity_swap(state: BranchState) -> BranchState:
    """
    P stage: reflect M1 through the origin and M2 across the e1 axis, then
    exchange the labels (M1, R1) and (M2, R2).
    """
    _require_relative(state, True)
    if state.frame != 'R1' or state.reference_axes is None:
        raise TransformError("parity swap expects the output of the U stage")
    labels = _mass_labels(state)
    e1 = state.reference_axes[0]
    branches = []
    for branch in state.branches:
        positions = dict(branch.positions)
        positions[labels[0]] = -branch.position(labels[0])
        positions[labels[1]] = _reflect_across_axis(branch.position(labels[1]), e1)
        branches.append(branch.with_positions(_swap_frames(positions, labels)))
    return state.with_branches(branches, frame=labels[0], previous_frame='R1')


def parity_swap_inverse(state: BranchState) -> BranchState:
    _require_relative(state, True)
    labels = _mass_labels(state)
    if state.frame != labels[0] or state.reference_axes is None:
        raise NonInvertibleMap("state was not produced by a parity swap")
    e1 = state.reference_axes[0]
    branches = []
    for branch in state.branches:
        positions = _swap_frames(dict(branch.positions), labels)
        positions[labels[0]] = -positions[labels[0]]
        positions[labels[1]] = _reflect_across_axis(positions[labels[1]], e1)
        branches.append(branch.with_positions(positions))
    return state.with_branches(branches, frame='R1', previous_frame=labels[0])


# =============================================================================
# FULL OPERATORS
# =============================================================================

def check_rigid_family(state: BranchState, tol: Optional[float] = None):
    """Raise NotRigidlyRelated unless every inter-mass distance agrees across branches."""
    tol = default_rigidity_tolerance() if tol is None else tol
    labels = _mass_labels(state)
    pairs = list(combinations(labels, 2))
    if not pairs or len(state.branches) == 1:
        return
    reference = state.branches[0]
    distances = np.array([
        np.linalg.norm(reference.position(p) - reference.position(q)) for p, q in pairs
    ])
    scale = max(float(distances.max()), 1e-300)
    for index, branch in enumerate(state.branches[1:], start=1):
        other = np.array([
            np.linalg.norm(branch.position(p) - branch.position(q)) for p, q in pairs
        ])
        deviation = float(np.max(np.abs(other - distances))) / scale
        if deviation > tol:
            raise NotRigidlyRelated(
                f"branch {index} mass configuration deviates by {deviation:.3e} (relative) "
                f"from branch 0"
            )


def s_r_to_m(state: BranchState, tol: Optional[float] = None) -> BranchState:
    if state.frame != 'R1' or 'R2' not in state.registry:
        raise TransformError("the isometry operator starts from the two-particle reference R")
    if state.dimension not in (2, 3):
        raise TransformError("the isometry operator needs D = 2 or D = 3")
    check_rigid_family(state, tol)

    relative, _ = t_rel(state)
    transformed = t_rel_inverse(parity_swap(controlled_shift_rotation(relative)))

    labels = _mass_labels(state)
    scale = max(float(np.max(np.abs(state.positions_of(label)))) for label in labels)
    definite_tol = max(1e-10, default_rigidity_tolerance() * scale)
    if not is_definite(transformed, labels, definite_tol):
        hint = " (register an orientation particle R3 in three dimensions)" \
            if state.dimension == 3 and 'R3' not in state.registry else ""
        raise NotRigidlyRelated(f"mass configuration did not become definite{hint}")
    logger.debug(f"Isometry operator applied to {len(state.branches)} branches")
    return transformed


def s_r_to_m_inverse(state: BranchState) -> BranchState:
    relative, _ = t_rel(state)
    restored = controlled_shift_rotation_inverse(parity_swap_inverse(relative))
    return replace(t_rel_inverse(restored), previous_frame=None)


def qrf_supp1(state: BranchState, new_frame) -> BranchState:
    """S^{A->B}: controlled shift of every system by the position of B."""
    _require_relative(state, False)
    new_frame = state.registry.get(new_frame).label
    if new_frame == state.frame:
        raise TransformError(f"{new_frame} is already the frame")
    branches = []
    for branch in state.branches:
        origin = branch.position(new_frame)
        frame_velocity = branch.velocity(new_frame)
        positions = {label: vector - origin for label, vector in branch.positions.items()}
        positions[new_frame] = np.zeros(state.dimension)
        velocities = {
            label: vector - frame_velocity for label, vector in branch.velocities.items()
        }
        velocities.pop(new_frame, None)
        if np.any(frame_velocity != 0.0):
            velocities[state.frame] = -frame_velocity
        branches.append(branch.with_positions(positions, velocities))
    return state.with_branches(branches, frame=new_frame, previous_frame=state.frame)


def qrf_shift_one_mass(state: BranchState, new_frame) -> BranchState:
    spec = state.registry.get(new_frame)
    if spec.kind != SystemKind.MASS:
        raise TransformError(f"{spec.label} is not a mass system")
    return qrf_supp1(state, spec.label)


# =============================================================================
# ANCILLA-CONTROLLED OPERATOR
# =============================================================================

def _apply_map_to_branch(branch, mapping: RigidMap):
    positions = {label: mapping.apply(vector) for label, vector in branch.positions.items()}
    velocities = {label: mapping.push_velocity(vector) for label, vector in branch.velocities.items()}
    return positions, velocities


def _pairwise(positions: Mapping) -> np.ndarray:
    points = np.array(list(positions.values()))
    return np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)


def ancilla_transform(state: BranchState, frame_maps: Mapping, new_frame='M1',
                      tol: Optional[float] = None) -> BranchState:
    """
    Apply the coordinate map selected by each branch's ancilla tag.

    The maps must preserve relative distances, and together they must send
    every mass to a tag-independent position with new_frame at the origin.
    """
    _require_relative(state, False)
    tol = default_position_tolerance() if tol is None else tol
    new_frame = state.registry.get(new_frame).label
    branches = []
    for index, branch in enumerate(state.branches):
        if branch.ancilla_tag is None:
            raise TagMissing(f"branch {index} carries no ancilla tag")
        if branch.ancilla_tag not in frame_maps:
            raise TagMissing(f"no coordinate map for ancilla tag {branch.ancilla_tag!r}")
        mapping = frame_maps[branch.ancilla_tag]
        try:
            mapping.inverse()
        except (NonInvertibleMap, np.linalg.LinAlgError) as exc:
            raise NonInvertibleMap(f"map for tag {branch.ancilla_tag!r} is not invertible") from exc
        positions, velocities = _apply_map_to_branch(branch, mapping)
        if np.max(np.abs(_pairwise(positions) - _pairwise(branch.positions))) > tol:
            raise NotRigidlyRelated(f"map for tag {branch.ancilla_tag!r} changes relative distances")
        if np.any(np.abs(positions[new_frame]) > tol):
            raise NonDefiniteResult(f"map for tag {branch.ancilla_tag!r} does not send {new_frame} to the origin")
        positions[new_frame] = np.zeros(state.dimension)
        branches.append(branch.with_positions(positions, velocities))

    transformed = state.with_branches(
        branches,
        frame=new_frame,
        previous_frame=state.frame,
        ancilla_maps=MappingProxyType(dict(frame_maps)),
    )
    if not is_definite(transformed, _mass_labels(state), tol):
        raise NonDefiniteResult("supplied maps leave the mass configuration indefinite")
    return transformed


def ancilla_transform_inverse(state: BranchState, tol: Optional[float] = None) -> BranchState:
    if state.ancilla_maps is None or state.previous_frame is None:
        raise NonInvertibleMap("state carries no stored ancilla maps")
    tol = default_position_tolerance() if tol is None else tol
    branches = []
    for branch in state.branches:
        inverse = state.ancilla_maps[branch.ancilla_tag].inverse()
        positions, velocities = _apply_map_to_branch(branch, inverse)
        if np.any(np.abs(positions[state.previous_frame]) > tol):
            raise NonDefiniteResult(f"{state.previous_frame} does not return to the origin")
        positions[state.previous_frame] = np.zeros(state.dimension)
        branches.append(branch.with_positions(positions, velocities))
    return state.with_branches(
        branches, frame=state.previous_frame, previous_frame=None, ancilla_maps=None
    )


def align_branches(state: BranchState, anchor='M1') -> dict:
    """Per-tag rigid maps sending each branch's masses onto branch 0's masses with anchor at the origin."""
    labels = _mass_labels(state)
    first = state.branches[0]
    target = np.array([first.position(label) - first.position(anchor) for label in labels])
    maps = {}
    for index, branch in enumerate(state.branches):
        if branch.ancilla_tag is None:
            raise TagMissing(f"branch {index} carries no ancilla tag")
        source = np.array([branch.position(label) for label in labels])
        mapping = rigid_map_between(source, target)
        if branch.ancilla_tag in maps:
            known = maps[branch.ancilla_tag]
            if not np.allclose(known.apply(source), target, rtol=0, atol=1e-12):
                raise TagMissing(f"tag {branch.ancilla_tag!r} marks incompatible branches")
            continue
        maps[branch.ancilla_tag] = mapping
    return maps


# =============================================================================
# MASS-FRAME DISPATCH
# =============================================================================

def uses_isometry(state: BranchState) -> bool:
    return (
        'R2' in state.registry
        and len(state.registry.masses) >= 2
        and state.dimension >= 2
    )


def mass_frame_maps(state: BranchState) -> list:
    """Per-branch rigid map from the current frame into the mass frame."""
    labels = _mass_labels(state)
    if not uses_isometry(state):
        return [
            RigidMap(np.eye(state.dimension), -branch.position(labels[0]))
            for branch in state.branches
        ]
    e1, e2 = _reference_vectors(state)
    maps = []
    for branch in state.branches:
        origin = branch.position(labels[0])
        a = branch.position(labels[1]) - origin
        b = branch.position(labels[2]) - origin if _axis_count(state) > 1 else None
        rotation, _ = _alignment(e1, a, b, e2)
        maps.append(RigidMap(rotation, -rotation @ origin))
    return maps


def to_mass_frame(state: BranchState) -> BranchState:
    if uses_isometry(state):
        return s_r_to_m(state)
    return qrf_shift_one_mass(state, state.registry.masses[0].label)


def from_mass_frame(state: BranchState, frame: Optional[str] = None) -> BranchState:
    if state.reference_axes is not None:
        return s_r_to_m_inverse(state)
    return qrf_supp1(state, frame or state.previous_frame)
