"""
Compare the covariant, semi-classical and collapse predictions of a scenario.

Usage:
    python manage.py compare --scenario simulator/fixtures/fig5.scn --out out/ --seed 7
"""

from simulator.services.pipeline_service import PipelineService

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Writes one prediction file per gravity model and the covariance-violation report'

    def run_scenario(self, scenario, options):
        result = PipelineService.compare(scenario, options['out'], seed=options['seed'], dt=options['dt'])
        for name, prediction in result.predictions.items():
            self.stdout.write(
                f"  {name}: {len(prediction.trajectories)} trajectories, entangled = {prediction.entanglement_flag}"
            )
        return result
