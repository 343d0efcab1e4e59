"""
CSV/JSON artifact writers.

Every artifact carries the config digest and the normalization convention so a
file can always be traced back to the run that produced it.
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

CONVENTION = (
    "semiclassical-kn: F_h u(xi)=sum dx^n e^{-i x.xi/h} u; "
    "F_h^{-1} v=(2 pi h)^{-n} sum dxi^n e^{i x.xi/h} v"
)


def format_value(value: Any) -> str:
    """Render a cell; floats use 17 significant digits so output round-trips."""
    if value is None:
        return "nan"
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, int):
        return str(value)
    return "%.17g" % float(value)


def header_comments(digest: Optional[str], extra: Optional[Dict[str, Any]] = None) -> List[str]:
    lines = [f"config_digest={digest or 'none'}", f"convention={CONVENTION}"]
    for key, value in (extra or {}).items():
        lines.append(f"{key}={value}")
    return lines


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    digest: Optional[str] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write a comment-prefixed CSV table with LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_comments(digest, extra):
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path: Path) -> List[List[str]]:
    """Read back a table written by write_csv, header row first, comments skipped."""
    with open(path, "r", newline="", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return [row for row in csv.reader(lines)]


def read_csv_comments(path: Path) -> Dict[str, str]:
    """key=value pairs from the leading '# ' comment lines of a table."""
    comments = {}
    with open(path, "r", newline="", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                comments[key] = value
    return comments


def write_json(path: Path, payload: Dict[str, Any], digest: Optional[str] = None) -> Path:
    """Write a report as UTF-8 JSON with sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = dict(payload)
    document["config_digest"] = digest or "none"
    document["convention"] = CONVENTION
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def _json_default(obj: Any) -> Any:
    # numpy scalars and arrays
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")
