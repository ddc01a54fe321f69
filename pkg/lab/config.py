"""
Scenario files: flat ``key = value`` lines, ``#`` comments, dotted namespaces.

Precedence, lowest first: field defaults, ``settings.SRPS_SCENARIO_DEFAULTS``,
the file, then ``--set key=value`` overrides.
"""
import io
import logging
from dataclasses import replace
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

from django.conf import settings
from dotenv.parser import parse_stream

from simnet.exceptions import ConfigurationError
from simnet.scenario import CONFIG_KEYS, ScenarioConfig

logger = logging.getLogger('srps.lab')


class Setting(NamedTuple):
    value: str
    line: int
    key_column: int
    value_column: int


def _indent(text: str) -> int:
    return len(text) - len(text.lstrip())


def _locate(original) -> tuple[int, str]:
    """Line number and text of a binding, past the blank lines the parser folds into it."""
    text = original.string
    prefix = text[:len(text) - len(text.lstrip())]
    line = original.line + prefix.count('\n')
    return line, text[prefix.rfind('\n') + 1:].split('\n', 1)[0].rstrip('\r')


def parse_config_text(text: str) -> dict[str, Setting]:
    """Every binding of a scenario file, with where it sits."""
    found = {}
    for binding in parse_stream(io.StringIO(text)):
        line, raw = _locate(binding.original)
        if binding.error:
            raise ConfigurationError(f'cannot parse {raw.strip()!r}', line=line, column=_indent(raw) + 1)
        if binding.key is None:
            continue
        key = binding.key.strip().lower()
        key_column = raw.find(binding.key) + 1
        if binding.value is None or not binding.value.strip():
            raise ConfigurationError(f'{key} has no value', key=key, line=line, column=len(raw) + 1)
        if key in found:
            raise ConfigurationError(f'{key} is already set on line {found[key].line}', key=key, line=line,
                                     column=key_column)
        after = raw.index('=') + 1
        found[key] = Setting(binding.value.strip(), line, key_column, after + _indent(raw[after:]) + 1)
    return found


def config_from_settings(found: dict[str, Setting], base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    changes = {}
    for key, setting in found.items():
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f'unknown key {key!r}', key=key, line=setting.line, column=setting.key_column)
        try:
            changes.update(ScenarioConfig.coerce(key, setting.value))
        except ConfigurationError as e:
            raise ConfigurationError(str(e), key=key, line=setting.line, column=setting.value_column) from e
    try:
        return replace(base or ScenarioConfig(), **changes)
    except ConfigurationError as e:
        setting = found.get(e.key)
        if setting is None:
            raise
        raise ConfigurationError(str(e), key=e.key, line=setting.line, column=setting.value_column) from e


def settings_defaults() -> ScenarioConfig:
    """Field defaults with ``settings.SRPS_SCENARIO_DEFAULTS`` on top; ``medium_pc`` names ``medium.pc``."""
    flat = {key.replace('.', '_'): key for key in CONFIG_KEYS}
    defaults = {flat.get(key, key): value for key, value in getattr(settings, 'SRPS_SCENARIO_DEFAULTS', {}).items()}
    try:
        return ScenarioConfig().with_overrides(defaults)
    except ConfigurationError as e:
        raise ConfigurationError(f'SRPS_DEFAULT_{(e.key or "").upper().replace(".", "_")}: {e}', key=e.key) from e


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    """``--set key=value`` flags, later ones winning."""
    values = {}
    for item in items:
        key, sep, value = item.partition('=')
        key = key.strip().lower()
        if not sep or not key:
            raise ConfigurationError(f'--set expects key=value, got {item!r}')
        values[key] = value.strip()
    return values


def load_scenario(path=None, overrides: Iterable[str] = ()) -> ScenarioConfig:
    config = settings_defaults()
    if path is not None:
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigurationError(f'cannot read {path}: {e.strerror or e}') from e
        config = config_from_settings(parse_config_text(text), config)
        logger.info('scenario loaded from %s', path)
    return config.with_overrides(parse_overrides(overrides))


def parse_values(items: Iterable[str]) -> list[str]:
    """Sweep values: separate arguments, comma lists or inclusive integer ranges such as ``2..8``."""
    values = []
    for item in items:
        for token in filter(None, (t.strip() for t in item.split(','))):
            low, sep, high = token.partition('..')
            if not sep:
                values.append(token)
                continue
            try:
                start, stop = int(low), int(high)
            except ValueError as e:
                raise ConfigurationError(f'ranges take integers, got {token!r}') from e
            if stop < start:
                raise ConfigurationError(f'empty range {token!r}')
            values.extend(str(v) for v in range(start, stop + 1))
    return values
