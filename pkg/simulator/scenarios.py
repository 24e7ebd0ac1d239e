"""
Scenario files: parsing, validation and serialization
Demonstrates: tomllib parsing, form-based validation, exact write-back

A scenario is a TOML document whose physical quantities are strings carrying
explicit units; see README.md for the grammar.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
import json
import logging
import re
import tomllib

from django.core.exceptions import ValidationError
import numpy as np

from .exceptions import ScenarioParseError
from .forms import (
    BranchForm,
    GridForm,
    ReferenceForm,
    ScenarioForm,
    SystemForm,
    TolerancesForm,
    UnitsForm,
)
from .services.clocks import PLUS_STATE, ClockSpec
from .services.state_core import (
    Branch,
    BranchState,
    SystemId,
    SystemKind,
    SystemRegistry,
    SystemSpec,
    UnitSystem,
)
from .units import (
    ACTION,
    ENERGY,
    GRAVITATIONAL,
    LENGTH,
    MASS,
    TIME,
    VELOCITY,
    format_quantity,
    parse_quantity,
)

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    'name', 'dimension', 'duration', 'dt', 'dynamics', 'models', 'seed', 'strict', 'qrf',
    'collapse_delay', 'units', 'tolerances', 'reference', 'systems', 'branches', 'grid',
}
BRANCH_KEYS = {'amplitude', 'tag', 'positions', 'velocities'}
FRAME_LABEL = 'R1'
TOML_LOCATION = re.compile(r'\s*\(at line (\d+), column (\d+)\)$')

# Scenario [tolerances] key -> settings name
TOLERANCE_SETTINGS = {
    'position': 'QRF_POSITION_TOLERANCE',
    'rigidity': 'QRF_RIGIDITY_TOLERANCE',
    'energy': 'QRF_ENERGY_TOLERANCE',
    'tracking_ratio': 'QRF_TRACKING_RATIO',
    'overlap_epsilon': 'QRF_OVERLAP_EPSILON',
    'spectral': 'QRF_SPECTRAL_TOLERANCE',
}


@dataclass(frozen=True)
class GridSettings:
    points: int
    extent: float
    width: float
    softening: float = 0.0

    @property
    def spacing(self) -> float:
        return self.extent / self.points


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario. `amplitudes` keeps the raw file values; `state` is normalized."""
    name: str
    dimension: int
    units: UnitSystem
    registry: SystemRegistry
    state: BranchState
    amplitudes: tuple
    duration: float
    dt: float
    dynamics: str = 'semiclassical'
    models: tuple = ('covariant',)
    seed: Optional[int] = None
    strict: Optional[bool] = None
    qrf: str = 'auto'
    collapse_delay: float = 0.0
    tolerances: dict = field(default_factory=dict)
    reference_uncertainty: Optional[float] = None
    reference_distance: Optional[float] = None
    clock: Optional[ClockSpec] = None
    grid: Optional[GridSettings] = None
    units_given: tuple = ()

    @property
    def probe_label(self) -> Optional[str]:
        """The system whose displacement is tracked: S, else the clock."""
        probe = self.registry.probe
        if probe is not None:
            return probe.label
        clocks = self.registry.clocks
        return clocks[0].label if clocks else None

    def settings_overrides(self) -> dict:
        return {TOLERANCE_SETTINGS[key]: value for key, value in self.tolerances.items()}


# =============================================================================
# PARSING
# =============================================================================

def _form_errors(form, where: str) -> str:
    messages = []
    for name, errors in form.errors.items():
        text = ' '.join(errors)
        messages.append(text if name == '__all__' else f'{name}: {text}')
    return f"[{where}] " + '; '.join(messages)


def _clean(form_class, data, where: str) -> dict:
    if not isinstance(data, dict):
        raise ValidationError(f"[{where}] must be a table")
    form = form_class(data=data)
    unknown = set(data) - set(form.fields)
    if unknown:
        raise ValidationError(f"unknown key(s) {sorted(unknown)} in [{where}]", code='unknown_key')
    if not form.is_valid():
        raise ValidationError(_form_errors(form, where), code='invalid')
    return form.cleaned_data


def _load_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        message = str(exc)
        match = TOML_LOCATION.search(message)
        if match:
            raise ScenarioParseError(
                TOML_LOCATION.sub('', message), int(match.group(1)), int(match.group(2))
            ) from exc
        raise ScenarioParseError(message) from exc


def _vectors(table, labels, dimension: int, unit_dimension, where: str, required: bool) -> dict:
    table = table or {}
    if not isinstance(table, dict):
        raise ValidationError(f"[{where}] must be a table")
    unknown = set(table) - set(labels)
    if unknown:
        raise ValidationError(f"unknown system(s) {sorted(unknown)} in [{where}]", code='unknown_key')
    if required and set(table) != set(labels):
        missing = sorted(set(labels) - set(table))
        raise ValidationError(f"[{where}] must cover all systems; missing {missing}")
    vectors = {}
    for label, text in table.items():
        values = parse_quantity(text, unit_dimension, vector=True)
        if len(values) != dimension:
            raise ValidationError(f"[{where}] {label} has {len(values)} components, expected {dimension}")
        vectors[label] = values
    return vectors


def _build_registry(entries) -> tuple:
    if not isinstance(entries, list) or not entries:
        raise ValidationError("scenario needs at least one [[systems]] entry")
    specs, clocks = [], {}
    for index, entry in enumerate(entries):
        data = _clean(SystemForm, entry, f'systems.{index}')
        specs.append(SystemSpec(SystemId(data['label'], data['kind']), data['mass']))
        if data['kind'] == SystemKind.CLOCK:
            clocks[data['label']] = data
    try:
        registry = SystemRegistry(specs)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if FRAME_LABEL not in registry:
        raise ValidationError("reference frame R1 required")
    if 'R3' in registry and 'R2' not in registry:
        raise ValidationError("R3 requires R2")
    if len(registry.of_kind(SystemKind.ANCILLA)) > 1 or len(clocks) > 1:
        raise ValidationError("at most one ancilla and one clock are supported")
    return registry, clocks


def _build_clock(clocks: dict, duration: float, units: UnitSystem) -> Optional[ClockSpec]:
    if not clocks:
        return None
    (data,) = clocks.values()
    initial = data['state'] or PLUS_STATE
    try:
        if data['E0'] is None:
            spec = ClockSpec.for_duration(duration, units)
            return ClockSpec(spec.E0, spec.E1, initial)
        return ClockSpec(data['E0'], data['E1'], initial)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _build_branches(entries, registry: SystemRegistry, dimension: int, clock_label, clock) -> tuple:
    if not isinstance(entries, list) or not entries:
        raise ValidationError("scenario needs at least one [[branches]] entry")
    positioned = registry.positioned_labels()
    branches, amplitudes = [], []
    for index, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ValidationError(f"[branches.{index}] must be a table")
        unknown = set(entry) - BRANCH_KEYS
        if unknown:
            raise ValidationError(f"unknown key(s) {sorted(unknown)} in [branches.{index}]", code='unknown_key')
        data = _clean(BranchForm, {k: v for k, v in entry.items() if k in ('amplitude', 'tag')},
                      f'branches.{index}')
        positions = _vectors(entry.get('positions'), positioned, dimension, LENGTH,
                             f'branches.{index}.positions', required=True)
        velocities = _vectors(entry.get('velocities'), positioned, dimension, VELOCITY,
                              f'branches.{index}.velocities', required=False)
        if any(value != 0.0 for value in positions[FRAME_LABEL]):
            raise ValidationError(f"frame R1 must sit at the origin in branch {index}")
        internal = {clock_label: clock.initial} if clock is not None else {}
        amplitudes.append(data['amplitude'])
        branches.append(Branch(data['amplitude'], positions, internal, data['tag'], velocities))
    return tuple(branches), tuple(amplitudes)


def _normalized(branches, amplitudes) -> list:
    norm = float(np.sqrt(sum(abs(amplitude) ** 2 for amplitude in amplitudes)))
    if norm == 0.0:
        raise ValidationError("branch amplitudes are all zero")
    if norm != 1.0:
        logger.warning(f"Branch amplitudes had norm {norm!r}; normalizing")
    return [
        Branch(amplitude / norm, branch.positions, branch.clock_internal, branch.ancilla_tag, branch.velocities)
        for branch, amplitude in zip(branches, amplitudes)
    ]


def parse_scenario(text: str) -> Scenario:
    """
    Parse and fully validate scenario text.

    Raises:
        ScenarioParseError: malformed TOML, with line and column
        UnitError: a quantity with a missing or wrong unit
        ValidationError: any other violated invariant
    """
    document = _load_toml(text)
    unknown = set(document) - TOP_LEVEL_KEYS
    if unknown:
        raise ValidationError(f"unknown top-level key(s) {sorted(unknown)}", code='unknown_key')
    top = _clean(ScenarioForm, {k: v for k, v in document.items() if k in ScenarioForm.base_fields},
                 'scenario')

    unit_data = _clean(UnitsForm, document.get('units', {}), 'units')
    codata = UnitSystem.codata()
    units = UnitSystem(
        G=codata.G if unit_data['G'] is None else unit_data['G'],
        c=codata.c if unit_data['c'] is None else unit_data['c'],
        hbar=codata.hbar if unit_data['hbar'] is None else unit_data['hbar'],
    )
    tolerances = {
        key: value for key, value in _clean(TolerancesForm, document.get('tolerances', {}), 'tolerances').items()
        if value is not None
    }
    reference = _clean(ReferenceForm, document.get('reference', {}), 'reference')

    registry, clocks = _build_registry(document.get('systems'))
    clock = _build_clock(clocks, top['duration'], units)
    branches, amplitudes = _build_branches(
        document.get('branches'), registry, top['dimension'], next(iter(clocks), None), clock
    )
    state = BranchState(registry, _normalized(branches, amplitudes), FRAME_LABEL)

    grid = None
    if 'grid' in document:
        grid = GridSettings(**_clean(GridForm, document['grid'], 'grid'))
    if top['dynamics'] == 'grid':
        if grid is None:
            raise ValidationError("grid dynamics needs a [grid] table")
        if top['dimension'] > 2:
            raise ValidationError("grid dynamics supports dimension 1 or 2")
        if registry.probe is None:
            raise ValidationError("grid dynamics needs a probe system S")
    if top['qrf'] == 'ancilla' and any(branch.ancilla_tag is None for branch in branches):
        raise ValidationError("qrf = 'ancilla' needs a tag on every branch")
    if top['qrf'] == 'isometry' and ('R2' not in registry or len(registry.masses) < 2):
        raise ValidationError("qrf = 'isometry' needs R2 and at least two masses")

    return Scenario(
        name=top['name'],
        dimension=top['dimension'],
        units=units,
        registry=registry,
        state=state,
        amplitudes=amplitudes,
        duration=top['duration'],
        dt=top['dt'],
        dynamics=top['dynamics'],
        models=tuple(top['models']),
        seed=top['seed'],
        strict=top['strict'],
        qrf=top['qrf'],
        collapse_delay=top['collapse_delay'],
        tolerances=tolerances,
        reference_uncertainty=reference['uncertainty'],
        reference_distance=reference['distance'],
        clock=clock,
        grid=grid,
        units_given=tuple(name for name, value in unit_data.items() if value is not None),
    )


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding='utf-8'))


# =============================================================================
# SERIALIZATION
# =============================================================================

def _string(value) -> str:
    return json.dumps(str(value), ensure_ascii=False)


def _number(value) -> str:
    value = complex(value)
    if value.imag == 0.0:
        return repr(value.real)
    return _string(repr(value))


def serialize_scenario(scenario: Scenario) -> str:
    """Write a scenario back as TOML; parse_scenario(serialize_scenario(s)) reproduces s exactly."""
    lines = [
        f"name = {_string(scenario.name)}",
        f"dimension = {scenario.dimension}",
        f"duration = {_string(format_quantity(scenario.duration, TIME))}",
        f"dt = {_string(format_quantity(scenario.dt, TIME))}",
        f"dynamics = {_string(scenario.dynamics)}",
        f"models = [{', '.join(_string(model) for model in scenario.models)}]",
        f"qrf = {_string(scenario.qrf)}",
        f"collapse_delay = {_string(format_quantity(scenario.collapse_delay, TIME))}",
    ]
    if scenario.seed is not None:
        lines.append(f"seed = {scenario.seed}")
    if scenario.strict is not None:
        lines.append(f"strict = {'true' if scenario.strict else 'false'}")

    units = {'G': (scenario.units.G, GRAVITATIONAL), 'c': (scenario.units.c, VELOCITY),
             'hbar': (scenario.units.hbar, ACTION)}
    lines += ['', '[units]']
    lines += [
        f"{name} = {_string(format_quantity(value, dimension))}"
        for name, (value, dimension) in units.items() if name in scenario.units_given
    ]
    if scenario.tolerances:
        lines += ['', '[tolerances]']
        for key, value in scenario.tolerances.items():
            text = _string(format_quantity(value, LENGTH)) if key == 'position' else repr(float(value))
            lines.append(f"{key} = {text}")
    reference = [
        (key, value) for key, value in
        (('uncertainty', scenario.reference_uncertainty), ('distance', scenario.reference_distance))
        if value is not None
    ]
    if reference:
        lines += ['', '[reference]']
        lines += [f"{key} = {_string(format_quantity(value, LENGTH))}" for key, value in reference]

    for spec in scenario.registry:
        lines += ['', '[[systems]]', f"label = {_string(spec.label)}", f"kind = {_string(spec.kind)}"]
        if spec.mass is not None:
            lines.append(f"mass = {_string(format_quantity(spec.mass, MASS))}")
        if spec.kind == SystemKind.CLOCK and scenario.clock is not None:
            lines.append(f"E0 = {_string(format_quantity(scenario.clock.E0, ENERGY))}")
            lines.append(f"E1 = {_string(format_quantity(scenario.clock.E1, ENERGY))}")
            lines.append(f"state = [{', '.join(_string(repr(value)) for value in scenario.clock.initial)}]")

    for branch, amplitude in zip(scenario.state.branches, scenario.amplitudes):
        lines += ['', '[[branches]]', f"amplitude = {_number(amplitude)}"]
        if branch.ancilla_tag is not None:
            lines.append(f"tag = {_string(branch.ancilla_tag)}")
        lines.append('[branches.positions]')
        lines += [
            f"{label} = {_string(format_quantity(vector, LENGTH))}"
            for label, vector in branch.positions.items()
        ]
        if branch.velocities:
            lines.append('[branches.velocities]')
            lines += [
                f"{label} = {_string(format_quantity(vector, VELOCITY))}"
                for label, vector in branch.velocities.items()
            ]

    if scenario.grid is not None:
        lines += [
            '', '[grid]',
            f"points = {scenario.grid.points}",
            f"extent = {_string(format_quantity(scenario.grid.extent, LENGTH))}",
            f"width = {_string(format_quantity(scenario.grid.width, LENGTH))}",
            f"softening = {_string(format_quantity(scenario.grid.softening, LENGTH))}",
        ]
    return '\n'.join(lines) + '\n'
