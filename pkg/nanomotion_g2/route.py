import inspect
import re
from pathlib import Path
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Pattern

from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.scenario.models import Scenario
from pydantic import BaseModel
from pydantic import Field

CommandFunc = Callable[..., "CommandResult"]

# Match subcommand names, eg. "modes", "simulate-g2"
COMMAND_REGEX = re.compile("^[a-z][a-z0-9]*(-[a-z0-9]+)*$")


class CommandContext(BaseModel):
    """Everything a command may ask for by parameter name."""

    scenario: Scenario
    out_dir: Path
    seed: int = Field(0, ge=0, lt=2 ** 64)
    threads: int = Field(1, ge=1)
    input_path: Optional[Path] = None
    config_path: Optional[Path] = None

    class Config:
        arbitrary_types_allowed = True


class CommandResult(BaseModel):
    outputs: List[Path] = []
    results: Dict[str, Any] = {}


def compile_command(name: str) -> Pattern[str]:
    """
    Given a command name, like: "simulate-g2", return the regex that also
    accepts its snake-case spelling, eg. "simulate_g2".
    """
    assert COMMAND_REGEX.match(name), f"Invalid command name '{name}'"
    parts = [re.escape(part) for part in name.split("-")]
    return re.compile("^" + "[-_]".join(parts) + "$")


class CommandRoute(object):
    def __init__(
        self,
        name: str,
        command_func: CommandFunc,
        description: Optional[str] = None,
    ) -> None:
        self.name = name
        self.command_regex = compile_command(name)
        self._command_func = command_func
        self.description = description or inspect.getdoc(command_func) or ""

        sections = set(Scenario.__fields__)
        context = set(CommandContext.__fields__)
        self.param_names: List[str] = []
        for param in inspect.signature(command_func).parameters.values():
            assert (
                param.name in sections or param.name in context
            ), f"Unknown command parameter '{param.name}' in '{name}'"
            self.param_names.append(param.name)

    @property
    def command_func(self) -> CommandFunc:
        return self._command_func

    @property
    def needs_input(self) -> bool:
        return "input_path" in self.param_names

    def matches(self, name: str) -> bool:
        return bool(self.command_regex.match(name))

    def solve(self, context: CommandContext) -> Dict[str, Any]:
        values: Dict[str, Any] = {}
        for name in self.param_names:
            if name in CommandContext.__fields__:
                value = getattr(context, name)
                if value is None and name == "input_path":
                    raise DomainError(f"command '{self.name}' needs --input")
            else:
                value = getattr(context.scenario, name)
            values[name] = value
        return values
