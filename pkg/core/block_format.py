# core/block_format.py
"""
Plain-text block format used by run configs, network configs and scene specs.

    # comment
    key = value            <- top-level keys (section "")
    [layer]
    kind = conv
    filters = 16
    [layer]                <- repeated sections keep their order
    kind = maxpool
"""

from typing import Any, Dict, Iterable, List, Tuple

from .errors import DecodeError

Block = Tuple[str, Dict[str, str]]


def parse_blocks(text: str) -> List[Block]:
    """Parse text into an ordered list of (section, key/value dict) blocks"""
    blocks: List[Block] = [("", {})]
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise DecodeError(f"line {line_no}: empty section header")
            blocks.append((name, {}))
            continue
        if "=" not in line:
            raise DecodeError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise DecodeError(f"line {line_no}: empty key")
        section, values = blocks[-1]
        if key in values:
            raise DecodeError(f"line {line_no}: duplicate key {key!r} in [{section}]")
        values[key] = value.strip()
    if not blocks[0][1]:
        blocks.pop(0)
    return blocks


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


def dump_blocks(blocks: Iterable[Block]) -> str:
    """Inverse of parse_blocks"""
    lines: List[str] = []
    for section, values in blocks:
        if section:
            if lines:
                lines.append("")
            lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def sections_as_dict(blocks: List[Block]) -> Dict[str, Dict[str, str]]:
    """Collapse blocks into {section: values}; repeated sections are an error"""
    merged: Dict[str, Dict[str, str]] = {}
    for section, values in blocks:
        if section in merged:
            raise DecodeError(f"section [{section}] appears more than once")
        merged[section] = dict(values)
    return merged


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise DecodeError(f"not a boolean: {value!r}")


def parse_floats(value: str) -> List[float]:
    try:
        return [float(part) for part in value.replace(";", ",").split(",") if part.strip()]
    except ValueError as exc:
        raise DecodeError(f"not a list of numbers: {value!r}") from exc
