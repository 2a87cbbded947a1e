"""Report serialization: JSON/CSV with 17 significant digits, atomic file
writes, and the per-run manifest."""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def to_json(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    out: list[str] = []
    _emit(obj, out, indent, 0)
    return "".join(out) + "\n"


def _emit(obj, out, indent, level):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for n, (k, v) in enumerate(obj.items()):
            out.append(("," if n else "") + pad + json.dumps(str(k)) + ": ")
            _emit(v, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float, np.generic)) and not isinstance(v, bool) for v in obj):
            out.append("[" + ", ".join(format_float(float(v)) if isinstance(v, (float, np.floating))
                                       else str(v) for v in obj) + "]")
            return
        out.append("[")
        for n, v in enumerate(obj):
            out.append(("," if n else "") + pad)
            _emit(v, out, indent, level + 1)
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_csv(rows) -> str:
    lines = []
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(format_float(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class RunManifest:
    version: str
    command: str
    argv: list[str]
    flags: dict
    model_path: str
    model_sha256: str
    seed: int | None = None
    started: str = field(default_factory=now_iso)
    finished: str | None = None
    outputs: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tool": "kellynet",
            "version": self.version,
            "command": self.command,
            "argv": self.argv,
            "flags": self.flags,
            "model": {"path": self.model_path, "sha256": self.model_sha256},
            "seed": self.seed,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
        }
