"""
Express a scenario in the mass frame.

Usage:
    python manage.py transform --scenario simulator/fixtures/four_mass_2d.scn --out out/
"""

from simulator.services.pipeline_service import PipelineService

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Applies the QRF change to the mass frame and writes the transformed state'

    def run_scenario(self, scenario, options):
        result = PipelineService.transform(scenario, options['out'])
        for quantity, value, unit in result.report_rows:
            self.stdout.write(f"  {quantity} = {value} {unit}".rstrip())
        return result
