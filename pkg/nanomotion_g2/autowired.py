from typing import Dict
from typing import List
from typing import Optional

from nanomotion_g2.exceptions import DomainError
from nanomotion_g2.logger import logger
from nanomotion_g2.route import CommandContext
from nanomotion_g2.route import CommandFunc
from nanomotion_g2.route import CommandResult
from nanomotion_g2.route import CommandRoute


class Autowired(object):
    def __init__(self) -> None:
        self._command_route: Dict[str, CommandRoute] = {}

    @property
    def command_route(self) -> Dict[str, CommandRoute]:
        return self._command_route

    @property
    def names(self) -> List[str]:
        return sorted(self._command_route)

    def get_route(self, name: str) -> CommandRoute:
        for route in self._command_route.values():
            if route.matches(name):
                return route
        raise DomainError(
            f"unknown command '{name}', expected one of {', '.join(self.names)}"
        )

    def __call__(self, name: str, description: Optional[str] = None) -> CommandFunc:
        def decorator(func: CommandFunc) -> CommandFunc:
            assert name not in self._command_route, f"Command '{name}' registered twice"
            self._command_route[name] = CommandRoute(
                name=name, command_func=func, description=description
            )
            return func

        return decorator

    def dispatch(self, name: str, context: CommandContext) -> CommandResult:
        """
        Resolve the command's parameters from the scenario sections and the run
        context by name, then call it.
        """
        route = self.get_route(name)
        values = route.solve(context)
        logger.debug("%s: injecting %s", route.name, ", ".join(values))
        result = route.command_func(**values)
        if not isinstance(result, CommandResult):
            result = CommandResult(outputs=list(result or []))
        return result


autowired = Autowired()
