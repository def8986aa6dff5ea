import logging
from celery import shared_task
from celery.exceptions import SoftTimeLimitExceeded

from .models import SimulationRun
from .services import SimulationProcessor

logger = logging.getLogger(__name__)


@shared_task(
    bind=True,
    name='harness.run_simulation',
    max_retries=0,
)
def run_simulation(self, run_id: int):
    """
    Execute one simulation run.

    A failed run is marked failed and not retried.

    Args:
        run_id: ID of SimulationRun to execute

    Raises:
        SimulationRun.DoesNotExist: If run not found
    """
    logger.info(f"Running simulation {run_id}")

    try:
        run = SimulationRun.objects.get(id=run_id)
        result = SimulationProcessor(run).process()
        logger.info(f"Simulation {run_id} finished: coverage {result['coverage']['mean']:.1f}%")
        return result

    except SimulationRun.DoesNotExist:
        logger.error(f"SimulationRun {run_id} not found")
        raise

    except SoftTimeLimitExceeded:
        logger.error(f"Simulation {run_id} timed out")
        try:
            SimulationRun.objects.get(id=run_id).mark_failed("Task timed out")
        except SimulationRun.DoesNotExist:
            pass
        raise
