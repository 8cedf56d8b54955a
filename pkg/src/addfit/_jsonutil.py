"""Deterministic JSON output.

The stdlib encoder prints floats with ``repr`` (shortest round-trip form).
File formats here promise a fixed textual representation -- every float is
printed with 17 significant digits, which round-trips IEEE-754 doubles
exactly -- so serialization is done by a small recursive writer with
insertion-ordered keys. Parsing is plain ``json.loads``.
"""

from __future__ import annotations

import math


def format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError("cannot serialize non-finite float %r" % x)
    return format(float(x), ".17g")


def _escape(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dumps(obj, indent: int = 0, _level: int = 0) -> str:
    """Serialize nested dict/list/str/float/int/bool/None deterministically."""
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return _escape(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    pad = newline = ""
    if indent:
        newline = "\n"
        pad = " " * (indent * (_level + 1))
    close_pad = " " * (indent * _level) if indent else ""
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (
            "%s%s: %s" % (pad, _escape(str(k)), dumps(v, indent, _level + 1))
            for k, v in obj.items()
        )
        return "{" + newline + ("," + newline).join(items) + newline + close_pad + "}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        items = ("%s%s" % (pad, dumps(v, indent, _level + 1)) for v in obj)
        return "[" + newline + ("," + newline).join(items) + newline + close_pad + "]"
    # numpy scalars and similar
    if hasattr(obj, "item"):
        return dumps(obj.item(), indent, _level)
    raise TypeError("cannot serialize %r" % type(obj))


def write_json(path, obj, indent: int = 2) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj, indent=indent))
        fh.write("\n")
