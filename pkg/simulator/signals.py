"""
Django Signals for the QRF gravity simulator
Broadcast validity verdicts and finished pipeline runs to interested receivers
"""

from django.conf import settings
from django.dispatch import Signal, receiver

import logging

logger = logging.getLogger(__name__)

# Sent with scenario=Scenario, report=ValidityReport
validity_checked = Signal()

# Sent with scenario=Scenario, paths={name: Path}
pipeline_finished = Signal()


# =============================================================================
# VALIDITY SIGNALS
# =============================================================================

@receiver(validity_checked)
def log_validity_verdict(sender, scenario, report, **kwargs):
    """
    Log the far-frame verdict of a scenario.

    Failed conditions are logged as warnings; the pipeline decides whether to abort.
    """
    if not getattr(settings, 'QRF_VALIDITY_LOGGING', True):
        return

    try:
        if report.passed:
            logger.info(
                f"Scenario '{scenario.name}' passes the far-frame conditions "
                f"(|dr_R| = {report.delta_r_R:.3e} m, dx_R = {report.delta_x_R:.3e} m)"
            )
        else:
            logger.warning(
                f"Scenario '{scenario.name}' fails far-frame condition(s): "
                f"{', '.join(report.failed_conditions)}"
            )
    except Exception as e:
        logger.error(f"Failed to log validity verdict: {str(e)}")


# =============================================================================
# PIPELINE SIGNALS
# =============================================================================

@receiver(pipeline_finished)
def log_pipeline_outputs(sender, scenario, paths, **kwargs):
    try:
        logger.info(f"Scenario '{scenario.name}' wrote {len(paths)} file(s): {', '.join(sorted(paths))}")
    except Exception as e:
        logger.error(f"Failed to log pipeline outputs: {str(e)}")
