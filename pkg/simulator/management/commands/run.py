"""
Run a scenario end to end: validity check, QRF pipeline, model comparisons.

Usage:
    python manage.py run --scenario simulator/fixtures/one_mass.scn --out out/
    python manage.py run --scenario simulator/fixtures/fig5.scn --strict --seed 7
"""

from simulator.services.pipeline_service import PipelineService

from ._base import ScenarioCommand


class Command(ScenarioCommand):
    help = 'Runs a scenario through the transform -> evolve -> inverse pipeline and writes CSV outputs'

    def run_scenario(self, scenario, options):
        result = PipelineService.run(
            scenario, options['out'], strict=options['strict'], seed=options['seed'], dt=options['dt'],
        )
        if result.validity is not None and not result.validity.passed:
            self.stdout.write(self.style.WARNING(
                f"Far-frame condition(s) failed: {', '.join(result.validity.failed_conditions)}"
            ))
        for name, prediction in result.predictions.items():
            self.stdout.write(f"  {name}: entangled = {prediction.entanglement_flag}")
        return result
