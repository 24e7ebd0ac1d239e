"""
Hold a clock next to a superposed mass and report the proper-time difference.

Usage:
    python manage.py clock --scenario simulator/fixtures/clock.scn --out out/
"""

from django.core.management.base import CommandError

from simulator.services.pipeline_service import PipelineService

from ._base import EXIT_ERROR, ScenarioCommand


class Command(ScenarioCommand):
    help = 'Evolves the clock of a scenario and writes the time-dilation report'

    def run_scenario(self, scenario, options):
        if scenario.clock is None:
            raise CommandError(f"scenario '{scenario.name}' has no clock system", returncode=EXIT_ERROR)
        result = PipelineService.clock(scenario, options['out'])
        report = result.clock_report
        self.stdout.write(f"  Δτ = {report.delta_tau!r} s (Planck time {report.planck_time:.3e} s)")
        self.stdout.write(f"  visibility = {report.visibility!r}")
        return result
