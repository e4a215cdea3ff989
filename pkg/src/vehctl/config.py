"""
Key-value configuration files.

    # comment
    [scenario]
    controller = mfc-natural   # trailing comments are fine
    dt = 0.001

    [segments]
    straight length=300 speed=19.44
    arc radius=120 angle=66 direction=left

Every section maps to one attribute of `ScenarioConfig` and every key to a
field of that section's dataclass; values are converted by the field type.
`[segments]` replaces the default track when present. Any problem raises
ConfigError carrying the file path and line number.
"""

from dataclasses import fields, replace
from pathlib import Path

from vehctl.errors import ConfigError, VehctlError
from vehctl.harness import ScenarioConfig
from vehctl.track import SegmentSpec

SEGMENTS_SECTION = "segments"

_TRUE = ("true", "yes", "on", "1")
_FALSE = ("false", "no", "off", "0")


# =============================================================================
# Value Conversion
# =============================================================================

def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected true/false, got '{raw}'")


def _parse_pairs(raw: str) -> tuple[tuple[float, float], ...]:
    pairs = []
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        cf, sep, cr = item.partition(":")
        if not sep:
            raise ValueError(f"expected cf:cr, got '{item}'")
        pairs.append((float(cf), float(cr)))
    return tuple(pairs)


def _parse_names(raw: str) -> tuple[str, ...]:
    return tuple(name.strip() for name in raw.split(",") if name.strip())


def _convert(field_type, raw: str):
    if field_type is bool:
        return _parse_bool(raw)
    if field_type is int:
        return int(raw)
    if field_type is float or field_type == float | None:
        return float(raw)
    if field_type is str:
        return raw
    if field_type == tuple[tuple[float, float], ...]:
        return _parse_pairs(raw)
    if field_type == tuple[str, ...]:
        return _parse_names(raw)
    raise ValueError(f"unsupported field type {field_type}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{repr(float(a))}:{repr(float(b))}" for a, b in value)
        return ", ".join(str(v) for v in value)
    return str(value)


# =============================================================================
# Parsing
# =============================================================================

def _section_classes() -> dict[str, type]:
    defaults = ScenarioConfig()
    return {
        f.name: type(getattr(defaults, f.name))
        for f in fields(ScenarioConfig)
        if f.name != SEGMENTS_SECTION
    }


def _parse_segment(line: str, path: str, lineno: int) -> SegmentSpec:
    kind, *items = line.split()
    types = {f.name: f.type for f in fields(SegmentSpec)}
    kwargs = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got '{item}'", path, lineno)
        if key not in types or key == "kind":
            raise ConfigError(f"unknown segment key '{key}'", path, lineno)
        try:
            kwargs[key] = _convert(types[key], raw)
        except ValueError as e:
            raise ConfigError(f"{key}: {e}", path, lineno) from e
    try:
        return SegmentSpec(kind=kind, **kwargs)
    except VehctlError as e:
        raise ConfigError(str(e), path, lineno) from e


def parse_config(
    text: str, path: str = "<string>", base: ScenarioConfig | None = None
) -> ScenarioConfig:
    """Parse config text; values override `base` (defaults if None)."""
    base = base or ScenarioConfig()
    classes = _section_classes()
    overrides: dict[str, dict[str, tuple[str, int]]] = {}
    headers: dict[str, int] = {}
    segments: list[SegmentSpec] | None = None
    section = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header '{line}'", path, lineno)
            section = line[1:-1].strip()
            if section in headers:
                raise ConfigError(f"duplicate section [{section}]", path, lineno)
            if section != SEGMENTS_SECTION and section not in classes:
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            headers[section] = lineno
            if section == SEGMENTS_SECTION:
                segments = []
            continue
        if section is None:
            raise ConfigError("value outside of a section", path, lineno)
        if section == SEGMENTS_SECTION:
            segments.append(_parse_segment(line, path, lineno))
            continue

        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got '{line}'", path, lineno)
        known = {f.name for f in fields(classes[section])}
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in [{section}]", path, lineno)
        entries = overrides.setdefault(section, {})
        if key in entries:
            raise ConfigError(f"duplicate key '{key}' in [{section}]", path, lineno)
        entries[key] = (raw, lineno)

    updates = {}
    for section, entries in overrides.items():
        cls = classes[section]
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, (raw, lineno) in entries.items():
            try:
                kwargs[key] = _convert(types[key], raw)
            except ValueError as e:
                raise ConfigError(f"{key}: {e}", path, lineno) from e
        try:
            updates[section] = replace(getattr(base, section), **kwargs)
        except (VehctlError, ValueError) as e:
            raise ConfigError(str(e), path, headers[section]) from e

    if segments is not None:
        if not segments:
            raise ConfigError("[segments] is empty", path, headers[SEGMENTS_SECTION])
        updates[SEGMENTS_SECTION] = tuple(segments)
    return replace(base, **updates)


def load_config(path: Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Read and parse a config file.

    Raises:
        ConfigError: if the file cannot be read or does not parse
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", str(path)) from e
    return parse_config(text, str(path), base)


# =============================================================================
# Rendering
# =============================================================================

def _dump_segment(segment: SegmentSpec) -> str:
    parts = [segment.kind]
    for f in fields(SegmentSpec):
        if f.name == "kind":
            continue
        value = getattr(segment, f.name)
        if value is None:
            continue
        if f.name == "direction" and segment.kind == "straight":
            continue
        parts.append(f"{f.name}={_format(value)}")
    return " ".join(parts)


def dump_config(config: ScenarioConfig) -> str:
    """Config text that parses back to `config`."""
    lines = []
    for f in fields(ScenarioConfig):
        if f.name == SEGMENTS_SECTION:
            continue
        section = getattr(config, f.name)
        lines.append(f"[{f.name}]")
        for inner in fields(section):
            lines.append(f"{inner.name} = {_format(getattr(section, inner.name))}")
        lines.append("")
    lines.append(f"[{SEGMENTS_SECTION}]")
    lines.extend(_dump_segment(segment) for segment in config.segments)
    return "\n".join(lines) + "\n"
