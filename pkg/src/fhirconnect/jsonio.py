"""JSON read/write that keeps decimal numbers exact.

Numbers with a fraction or exponent are read as ``decimal.Decimal`` and
written back with their original digits, so ``1.50`` stays ``1.50``.
"""

from __future__ import annotations

import json
from decimal import Decimal
from typing import Any


def loads(text) -> Any:
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8")
    return json.loads(text, parse_float=Decimal)


def _number(value: Decimal) -> str:
    if not value.is_finite():
        raise ValueError(f"cannot serialize non-finite decimal {value}")
    return str(value)


def _emit(value: Any, level: int, out: list) -> None:
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        pad = "  " * (level + 1)
        out.append("{\n")
        for i, key in enumerate(sorted(value)):
            if i:
                out.append(",\n")
            out.append(pad + json.dumps(str(key), ensure_ascii=False) + ": ")
            _emit(value[key], level + 1, out)
        out.append("\n" + "  " * level + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        pad = "  " * (level + 1)
        out.append("[\n")
        for i, item in enumerate(value):
            if i:
                out.append(",\n")
            out.append(pad)
            _emit(item, level + 1, out)
        out.append("\n" + "  " * level + "]")
    elif isinstance(value, Decimal):
        out.append(_number(value))
    else:
        out.append(json.dumps(value, ensure_ascii=False, allow_nan=False))


def dumps(value: Any) -> str:
    """Pretty-print with two-space indent and sorted keys; ends with a newline."""
    out: list = []
    _emit(value, 0, out)
    out.append("\n")
    return "".join(out)
