import configparser
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Tuple
from typing import Type
from typing import Union

import numpy as np
from nanomotion_g2.exceptions import ScenarioParseError
from nanomotion_g2.exceptions import ScenarioValidationError
from nanomotion_g2.logger import logger
from nanomotion_g2.scenario.convertors import CONVERTOR_TYPES
from nanomotion_g2.scenario.models import Scenario
from nanomotion_g2.scenario.models import SectionModel
from nanomotion_g2.utils import CsvConverter
from pydantic import ValidationError
from pydantic.error_wrappers import ErrorWrapper
from pydantic.errors import ExtraError

PathLike = Union[str, Path]


class ScenarioConverter(object):
    @classmethod
    def section_model(cls, name: str) -> Optional[Type[SectionModel]]:
        field = Scenario.__fields__.get(name)
        return field.type_ if field is not None else None

    @classmethod
    def convert_section(
        cls, name: str, raw: Dict[str, str]
    ) -> Tuple[Dict[str, Any], List[ErrorWrapper]]:
        model = cls.section_model(name)
        values: Dict[str, Any] = {}
        errors: List[ErrorWrapper] = []
        for key, text in raw.items():
            field = model.__fields__.get(key)
            if field is None:
                errors.append(ErrorWrapper(ExtraError(), loc=(name, key)))
                continue
            convertor = CONVERTOR_TYPES[field.field_info.extra.get("unit", "float")]
            try:
                values[key] = convertor.convert(text)
            except ValueError as e:
                errors.append(ErrorWrapper(e, loc=(name, key)))
        return values, errors

    @classmethod
    def log_defaults(cls, scenario: Scenario) -> None:
        for name in Scenario.__fields__:
            section = getattr(scenario, name)
            for key, field in section.__fields__.items():
                if key in section.__fields_set__:
                    continue
                value = getattr(section, key)
                if value is None:
                    continue
                convertor = CONVERTOR_TYPES[field.field_info.extra.get("unit", "float")]
                shown = value.value if hasattr(value, "value") else value
                logger.info(
                    "default applied: [%s] %s = %s",
                    name,
                    key,
                    convertor.to_string(shown),
                )


def _parse(text: str, source: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";")
    )
    parser.optionxform = str  # type: ignore
    try:
        parser.read_string(text, source=source)
    except (
        configparser.DuplicateOptionError,
        configparser.DuplicateSectionError,
        configparser.MissingSectionHeaderError,
    ) as e:
        raise ScenarioParseError(e.message, e.lineno)
    except configparser.ParsingError as e:
        lineno, line = e.errors[0]
        raise ScenarioParseError(f"cannot parse {line.strip()!r}", lineno)
    except configparser.Error as e:
        raise ScenarioParseError(str(e))
    return parser


def parse_scenario(text: str, path: Optional[PathLike] = None) -> Scenario:
    parser = _parse(text, str(path or "<scenario>"))

    data: Dict[str, Dict[str, Any]] = {}
    errors: List[ErrorWrapper] = []
    for name in parser.sections():
        if ScenarioConverter.section_model(name) is None:
            errors.append(ErrorWrapper(ExtraError(), loc=(name,)))
            continue
        values, section_errors = ScenarioConverter.convert_section(
            name, dict(parser.items(name))
        )
        data[name] = values
        errors.extend(section_errors)
    if errors:
        raise ScenarioValidationError(errors, path=path)

    try:
        scenario = Scenario(**data)
    except ValidationError as e:
        raise ScenarioValidationError(e.raw_errors, path=path)

    ScenarioConverter.log_defaults(scenario)
    logger.info(
        "theta = dx_th/w0 = %.6g (dx_th = %.6g m)", scenario.theta, scenario.spread
    )
    if scenario.theta >= scenario.validity_limit:
        logger.warning(
            "theta=%.4g is not << gamma_rad/omega_m; steady-state start weights "
            "are approximate (limit %.4g)",
            scenario.theta,
            scenario.validity_limit,
        )
    else:
        logger.info("validity guard: theta below %.4g", scenario.validity_limit)
    return scenario


def load_scenario(path: PathLike) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioParseError(f"cannot read {path}: {e.strerror}")
    return parse_scenario(text, path)


def read_psf_table(path: PathLike) -> np.ndarray:
    """Two-column CSV (offset in m, normalised value) of a tabulated profile."""
    header, table = CsvConverter.read(path)
    if len(header) != 2:
        raise ScenarioParseError(f"{path}: expected two columns, got {len(header)}")
    return table
