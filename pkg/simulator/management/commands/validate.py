"""
Check the far-frame validity conditions of a scenario.

Usage:
    python manage.py validate --scenario simulator/fixtures/clock.scn --strict
"""

from simulator.services.pipeline_service import PipelineService

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Evaluates the far-frame conditions and writes validity.csv'

    def run_scenario(self, scenario, options):
        result = PipelineService.validate(scenario, options['out'], strict=options['strict'])
        report = result.validity
        for name, verdict in report.verdicts.items():
            style = self.style.SUCCESS if verdict else self.style.WARNING
            self.stdout.write(style(f"  {'✓' if verdict else '✗'} {name}"))
        return result
