import re
import typing

from nanomotion_g2.scenario.constants import NUMBER_REGEX
from nanomotion_g2.scenario.constants import SI_PREFIXES
from nanomotion_g2.utils import format_float

PREFIX_REGEX = "[" + "".join(SI_PREFIXES) + "]"


class Convertor:
    regex = ""

    def convert(self, value: str) -> typing.Any:
        raise NotImplementedError()  # pragma: no cover

    def to_string(self, value: typing.Any) -> str:
        raise NotImplementedError()  # pragma: no cover


class StringConvertor(Convertor):
    regex = r"\S(?:.*\S)?"

    def convert(self, value: str) -> typing.Any:
        value = value.strip()
        if not value:
            raise ValueError("empty value")
        return value

    def to_string(self, value: typing.Any) -> str:
        return str(value)


class IntegerConvertor(Convertor):
    regex = r"[-+]?[0-9]+"

    def convert(self, value: str) -> typing.Any:
        if not re.fullmatch(self.regex, value.strip()):
            raise ValueError(f"not an integer: {value!r}")
        return int(value)

    def to_string(self, value: typing.Any) -> str:
        return str(int(value))


class FloatConvertor(Convertor):
    regex = NUMBER_REGEX

    def convert(self, value: str) -> typing.Any:
        if not re.fullmatch(self.regex, value.strip()):
            raise ValueError(f"not a number: {value!r}")
        return float(value)

    def to_string(self, value: typing.Any) -> str:
        return format_float(value)


class PairConvertor(Convertor):
    regex = rf"{NUMBER_REGEX}\s*,\s*{NUMBER_REGEX}"

    def convert(self, value: str) -> typing.Any:
        if not re.fullmatch(self.regex, value.strip()):
            raise ValueError(f"expected two comma-separated numbers: {value!r}")
        first, second = value.split(",")
        return float(first), float(second)

    def to_string(self, value: typing.Any) -> str:
        return ", ".join(format_float(v) for v in value)


class QuantityConvertor(Convertor):
    """
    A number with an optional prefixed unit, e.g. ``190 kHz`` or ``2e-15 kg``.

    ``base`` is the SI value of one bare ``units[0]``; a number without unit is
    taken as already in SI.
    """

    units: typing.Tuple[str, ...] = ()
    si_unit = ""
    base = 1.0

    def __init__(self) -> None:
        ordered = sorted(self.units, key=len, reverse=True)
        names = "|".join(re.escape(u) for u in ordered)
        self.regex = (
            rf"(?P<number>{NUMBER_REGEX})\s*"
            rf"(?:(?P<prefix>{PREFIX_REGEX})?(?P<unit>{names}))?"
        )
        self._pattern = re.compile(self.regex)

    def convert(self, value: str) -> typing.Any:
        match = self._pattern.fullmatch(value.strip())
        if match is None:
            raise ValueError(f"cannot read {value!r} as {self.si_unit}")
        number = float(match.group("number"))
        if match.group("unit") is None:
            return number
        prefix = SI_PREFIXES[match.group("prefix")] if match.group("prefix") else 1.0
        return number * prefix * self.base

    def to_string(self, value: typing.Any) -> str:
        return f"{format_float(value)} {self.si_unit}"


class FrequencyConvertor(QuantityConvertor):
    units = ("Hz",)
    si_unit = "Hz"


class LengthConvertor(QuantityConvertor):
    units = ("m",)
    si_unit = "m"


class TimeConvertor(QuantityConvertor):
    units = ("s",)
    si_unit = "s"


class MassConvertor(QuantityConvertor):
    units = ("g",)
    si_unit = "kg"
    base = 1e-3


class VoltageConvertor(QuantityConvertor):
    units = ("V",)
    si_unit = "V"


class TemperatureConvertor(QuantityConvertor):
    units = ("K",)
    si_unit = "K"


class RateConvertor(QuantityConvertor):
    units = ("1/s", "/s", "s^-1")
    si_unit = "1/s"


class VoltagePsdConvertor(QuantityConvertor):
    units = ("V^2/Hz",)
    si_unit = "V^2/Hz"


class ForceCoefficientConvertor(QuantityConvertor):
    units = ("N/V^2",)
    si_unit = "N/V^2"


class DeflectionCoefficientConvertor(QuantityConvertor):
    units = ("m/V^2",)
    si_unit = "m/V^2"


CONVERTOR_TYPES = {
    "str": StringConvertor(),
    "int": IntegerConvertor(),
    "float": FloatConvertor(),
    "pair": PairConvertor(),
    "frequency": FrequencyConvertor(),
    "length": LengthConvertor(),
    "time": TimeConvertor(),
    "mass": MassConvertor(),
    "voltage": VoltageConvertor(),
    "temperature": TemperatureConvertor(),
    "rate": RateConvertor(),
    "voltage_psd": VoltagePsdConvertor(),
    "force_coefficient": ForceCoefficientConvertor(),
    "deflection_coefficient": DeflectionCoefficientConvertor(),
}
