from pathlib import Path
from typing import Optional
from typing import Sequence
from typing import Union

from nanomotion_g2 import status
from pydantic import create_model
from pydantic import ValidationError
from pydantic.error_wrappers import ErrorList

ScenarioErrorModel = create_model("Scenario")


class SimulationException(Exception):
    exit_code: int = status.EXIT_1_RUNTIME_FAILURE

    def __init__(self, detail: Optional[str] = None, exit_code: int = None) -> None:
        if exit_code is not None:
            self.exit_code = exit_code
        if detail is None:
            detail = status.EXIT_PHRASES[self.exit_code]
        self.detail = detail
        super().__init__(detail)


class UnsupportedRegimeError(SimulationException):
    pass


class StepTooCoarseError(SimulationException):
    pass


class PopulationDriftError(SimulationException):
    pass


class DegenerateGeneratorError(SimulationException):
    pass


class RootBracketError(SimulationException):
    pass


class QuadratureError(SimulationException):
    pass


class DomainError(SimulationException):
    pass


class ConfigMismatchError(SimulationException):
    pass


class EmptyEnsembleError(SimulationException):
    pass


class NormalizationWindowError(SimulationException):
    pass


class ThinningBoundError(SimulationException):
    pass


class SeriesReliabilityError(SimulationException):
    pass


class ConvergenceError(SimulationException):
    exit_code = status.EXIT_3_NON_CONVERGENCE


class RankDeficientError(ConvergenceError):
    pass


class ScenarioParseError(SimulationException):
    exit_code = status.EXIT_2_VALIDATION_FAILURE

    def __init__(self, detail: str, lineno: Optional[int] = None) -> None:
        self.lineno = lineno
        if lineno is not None:
            detail = f"line {lineno}: {detail}"
        super().__init__(detail)


class ScenarioValidationError(ValidationError):
    exit_code = status.EXIT_2_VALIDATION_FAILURE

    def __init__(
        self, errors: Sequence[ErrorList], *, path: Union[str, Path, None] = None
    ) -> None:
        self.path = path
        super().__init__(errors, ScenarioErrorModel)
