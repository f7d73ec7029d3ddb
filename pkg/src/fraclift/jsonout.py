"""Deterministic JSON emission for machine-readable reports.

Floats are rendered with 17 significant digits so identical runs produce
byte-identical files; containers keep insertion order.
"""

from __future__ import annotations

import numpy as np


def _render(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, str):
        parts.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"')
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if x != x:
            parts.append('"nan"')
        elif x in (float("inf"), float("-inf")):
            parts.append(f'"{x}"')
        else:
            parts.append(format(x, ".17g"))
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                parts.append(",")
            _render(str(k), parts)
            parts.append(":")
            _render(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        parts.append("[")
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        for i, v in enumerate(seq):
            if i:
                parts.append(",")
            _render(v, parts)
        parts.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps(obj) -> str:
    parts: list[str] = []
    _render(obj, parts)
    return "".join(parts)


def dump_file(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
        fh.write("\n")
