from nanomotion_g2 import status
from nanomotion_g2.exceptions import ScenarioValidationError
from nanomotion_g2.exceptions import SimulationException
from nanomotion_g2.logger import logger
from pydantic import ValidationError


class ExitCodeMiddleware(object):
    def process_exception(self, exc: Exception) -> int:
        if isinstance(exc, SimulationException):
            logger.error("%s: %s", type(exc).__name__, exc.detail)
            return exc.exit_code
        elif isinstance(exc, ScenarioValidationError):
            source = f" in {exc.path}" if exc.path is not None else ""
            logger.error("invalid scenario%s\n%s", source, exc)
            return exc.exit_code
        elif isinstance(exc, ValidationError):
            logger.error("invalid input\n%s", exc)
            return status.EXIT_2_VALIDATION_FAILURE
        elif isinstance(exc, OSError):
            logger.error("%s: %s", type(exc).__name__, exc)
            return status.EXIT_1_RUNTIME_FAILURE
        else:
            raise exc
