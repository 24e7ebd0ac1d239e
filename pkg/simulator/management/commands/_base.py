"""
Shared plumbing for the simulator management commands.

Usage:
    python manage.py <command> --scenario simulator/fixtures/one_mass.scn --out out/
"""

from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from simulator.exceptions import SimulationError, ValidityFailed
from simulator.scenarios import load_scenario

EXIT_ERROR = 1
EXIT_VALIDITY = 2


class ScenarioCommand(BaseCommand):
    """Base class: reads --scenario, runs the command body, maps failures to exit codes."""

    def add_arguments(self, parser):
        parser.add_argument(
            '--scenario',
            required=True,
            help='Path to the scenario file (.scn, TOML)',
        )
        parser.add_argument(
            '--out',
            default='out',
            help='Directory for CSV outputs (default: out)',
        )
        parser.add_argument(
            '--strict',
            action='store_true',
            default=None,
            help='Abort with exit code 2 when a far-frame validity condition fails',
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='RNG seed for collapse sampling (overrides the scenario)',
        )
        parser.add_argument(
            '--dt',
            type=float,
            default=None,
            help='Integrator step in seconds (overrides the scenario)',
        )

    def run_scenario(self, scenario, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        path = Path(options['scenario'])
        try:
            scenario = load_scenario(path)
        except ValidationError as e:
            raise CommandError(f"{path}: {'; '.join(e.messages)}", returncode=EXIT_ERROR)
        except OSError as e:
            raise CommandError(f"{path}: {e}", returncode=EXIT_ERROR)

        if options['dt'] is not None and not options['dt'] > 0:
            raise CommandError('--dt must be positive', returncode=EXIT_ERROR)

        self.stdout.write(f"Scenario '{scenario.name}' ({path})")
        try:
            result = self.run_scenario(scenario, options)
        except ValidityFailed as e:
            self.stdout.write(self.style.ERROR(f"✗ {e}"))
            raise CommandError(f"scenario '{scenario.name}': {e}", returncode=EXIT_VALIDITY)
        except (SimulationError, ValidationError, OSError, ValueError) as e:
            raise CommandError(f"scenario '{scenario.name}': {e}", returncode=EXIT_ERROR)

        for name, written in sorted(result.paths.items()):
            self.stdout.write(self.style.SUCCESS(f"✓ Wrote {name}: {written}"))
        return None
