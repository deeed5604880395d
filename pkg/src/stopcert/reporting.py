"""Report rendering: fixed-precision text and machine-readable documents."""

from __future__ import annotations

import json
from typing import Any


def fmt17(x: float) -> str:
    """17-significant-digit decimal rendering used by every CSV and report."""
    return format(float(x), ".17g")


def _render_value(v: Any) -> str:
    if isinstance(v, float):
        return fmt17(v)
    if isinstance(v, bool) or v is None:
        return str(v).lower() if v is not None else "none"
    return str(v)


def render_text(doc: Any, indent: int = 0) -> str:
    """Key/value text rendering of a nested report document."""
    pad = "  " * indent
    lines = []
    if isinstance(doc, dict):
        for k, v in doc.items():
            if isinstance(v, (dict, list)):
                lines.append(f"{pad}{k}:")
                lines.append(render_text(v, indent + 1))
            else:
                lines.append(f"{pad}{k}: {_render_value(v)}")
    elif isinstance(doc, list):
        for item in doc:
            if isinstance(item, (dict, list)):
                lines.append(f"{pad}-")
                lines.append(render_text(item, indent + 1))
            else:
                lines.append(f"{pad}- {_render_value(item)}")
    else:
        lines.append(f"{pad}{_render_value(doc)}")
    return "\n".join(line for line in lines if line != "")


def render_json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"
