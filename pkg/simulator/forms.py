"""
Forms for scenario files
Demonstrates: custom form fields with units, clean_* validation, cross-field checks

Each TOML table of a scenario is validated by one form; scenarios.py assembles
the cleaned data into a Scenario.
"""

from django import forms
from django.core.exceptions import ValidationError

from .services.model_compare import GravityModel
from .services.state_core import LABEL_PATTERN, SystemKind
from .units import ACTION, DIMENSIONLESS, ENERGY, GRAVITATIONAL, LENGTH, MASS, TIME, VELOCITY, parse_quantity


class QuantityField(forms.Field):
    """Field holding a quantity string such as "5.0e-5 m"; cleans to SI float(s)."""

    def __init__(self, dimension=DIMENSIONLESS, vector=False, **kwargs):
        self.dimension = dimension
        self.vector = vector
        super().__init__(**kwargs)

    def to_python(self, value):
        if value in self.empty_values:
            return None
        return parse_quantity(value, self.dimension, vector=self.vector)


class AmplitudeField(forms.Field):
    """A number or a complex literal string such as "0.5+0.5j"."""

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if isinstance(value, bool):
            raise ValidationError('Amplitude must be a number.', code='invalid')
        try:
            return complex(value.replace(' ', '') if isinstance(value, str) else value)
        except (TypeError, ValueError):
            raise ValidationError(f"'{value}' is not a complex amplitude.", code='invalid')


# =============================================================================
# SCENARIO FORMS
# =============================================================================

class ScenarioForm(forms.Form):
    """Top-level keys of a scenario file."""
    DYNAMICS_CHOICES = [('semiclassical', 'Semi-classical branches'), ('grid', 'Grid wavefunction')]
    QRF_CHOICES = [
        ('auto', 'Pick from the scenario'),
        ('shift', 'Controlled shift'),
        ('isometry', 'N-mass isometry'),
        ('ancilla', 'Ancilla-controlled maps'),
    ]

    name = forms.CharField(max_length=200)
    dimension = forms.IntegerField(min_value=1, max_value=3)
    duration = QuantityField(TIME)
    dt = QuantityField(TIME)
    dynamics = forms.ChoiceField(choices=DYNAMICS_CHOICES, required=False)
    models = forms.MultipleChoiceField(choices=GravityModel.choices, required=False)
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1, required=False)
    strict = forms.NullBooleanField(required=False)
    qrf = forms.ChoiceField(choices=QRF_CHOICES, required=False)
    collapse_delay = QuantityField(TIME, required=False)

    def clean_duration(self):
        duration = self.cleaned_data.get('duration')
        if duration is not None and not duration > 0:
            raise ValidationError('duration must be positive')
        return duration

    def clean_dt(self):
        dt = self.cleaned_data.get('dt')
        if dt is not None and not dt > 0:
            raise ValidationError('dt must be positive')
        return dt

    def clean_dynamics(self):
        return self.cleaned_data.get('dynamics') or 'semiclassical'

    def clean_qrf(self):
        return self.cleaned_data.get('qrf') or 'auto'

    def clean_models(self):
        return self.cleaned_data.get('models') or [GravityModel.COVARIANT.value]

    def clean(self):
        cleaned_data = super().clean()
        duration = cleaned_data.get('duration')
        delay = cleaned_data.get('collapse_delay') or 0.0
        if duration is not None and not 0 <= delay <= duration:
            raise ValidationError('collapse_delay must lie within the duration')
        cleaned_data['collapse_delay'] = delay
        return cleaned_data


class UnitsForm(forms.Form):
    G = QuantityField(GRAVITATIONAL, required=False)
    c = QuantityField(VELOCITY, required=False)
    hbar = QuantityField(ACTION, required=False)

    def clean(self):
        cleaned_data = super().clean()
        for name, value in cleaned_data.items():
            if value is not None and not value > 0:
                self.add_error(name, f'{name} must be strictly positive')
        return cleaned_data


class TolerancesForm(forms.Form):
    position = QuantityField(LENGTH, required=False)
    rigidity = forms.FloatField(min_value=0, required=False)
    energy = forms.FloatField(min_value=0, required=False)
    tracking_ratio = forms.FloatField(min_value=1, required=False)
    overlap_epsilon = forms.FloatField(min_value=0, max_value=1, required=False)
    spectral = forms.FloatField(min_value=0, required=False)


class ReferenceForm(forms.Form):
    uncertainty = QuantityField(LENGTH, required=False)
    distance = QuantityField(LENGTH, required=False)

    def clean_uncertainty(self):
        uncertainty = self.cleaned_data.get('uncertainty')
        if uncertainty is not None and not uncertainty > 0:
            raise ValidationError('reference uncertainty must be positive')
        return uncertainty

    def clean_distance(self):
        distance = self.cleaned_data.get('distance')
        if distance is not None and not distance > 0:
            raise ValidationError('reference distance must be positive')
        return distance


class SystemForm(forms.Form):
    """One [[systems]] entry."""
    label = forms.CharField(max_length=4)
    kind = forms.ChoiceField(choices=SystemKind.choices)
    mass = QuantityField(MASS, required=False)
    E0 = QuantityField(ENERGY, required=False)
    E1 = QuantityField(ENERGY, required=False)
    state = forms.Field(required=False)

    def clean_label(self):
        label = self.cleaned_data.get('label')
        if not LABEL_PATTERN.match(label):
            raise ValidationError(f"'{label}' is not a system label (R1-R3, M<n>, S, C, A)")
        return label

    def clean_state(self):
        state = self.cleaned_data.get('state')
        if state in (None, '', []):
            return None
        if not isinstance(state, list) or len(state) != 2:
            raise ValidationError('clock state must be a pair of amplitudes')
        return tuple(AmplitudeField().clean(value) for value in state)

    def clean(self):
        cleaned_data = super().clean()
        kind = cleaned_data.get('kind')
        mass = cleaned_data.get('mass')
        if kind in (SystemKind.MASS, SystemKind.PROBE):
            if mass is None:
                raise ValidationError(f'{kind} mass required')
            if not mass > 0:
                raise ValidationError(f'{kind} mass must be positive')
        has_levels = cleaned_data.get('E0') is not None or cleaned_data.get('E1') is not None
        if kind != SystemKind.CLOCK and (has_levels or cleaned_data.get('state')):
            raise ValidationError('only clock systems carry E0, E1 or state')
        if has_levels and (cleaned_data.get('E0') is None or cleaned_data.get('E1') is None):
            raise ValidationError('clock levels need both E0 and E1')
        if has_levels and cleaned_data['E0'] == cleaned_data['E1']:
            raise ValidationError('clock levels E0 and E1 must differ')
        return cleaned_data


class BranchForm(forms.Form):
    amplitude = AmplitudeField()
    tag = forms.CharField(max_length=100, required=False)

    def clean_tag(self):
        return self.cleaned_data.get('tag') or None


class GridForm(forms.Form):
    points = forms.IntegerField(min_value=8, max_value=8192)
    extent = QuantityField(LENGTH)
    width = QuantityField(LENGTH)
    softening = QuantityField(LENGTH, required=False)

    def clean(self):
        cleaned_data = super().clean()
        extent, width = cleaned_data.get('extent'), cleaned_data.get('width')
        if extent is not None and not extent > 0:
            self.add_error('extent', 'grid extent must be positive')
        if width is not None and not width > 0:
            self.add_error('width', 'packet width must be positive')
        cleaned_data['softening'] = cleaned_data.get('softening') or 0.0
        return cleaned_data
