"""Deterministic file writers shared by all exporters.

Every artifact is UTF-8, newline-terminated and has a fixed field order,
so repeated runs with the same seed are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path


def write_json(path, data) -> None:
    text = json.dumps(data, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)
