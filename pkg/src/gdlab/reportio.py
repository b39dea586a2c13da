"""Report serialization and atomic file IO.

JSON reports are rendered with a fixed key order (insertion order of the
dicts that build them) and floats at 17 significant digits, so identical
runs produce byte-identical files.  All writes go through a temp file in
the target directory followed by an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile

from .errors import ReportIOError

__all__ = [
    "canonical_json", "write_json_report", "load_json",
    "atomic_write_bytes", "atomic_write_text", "cache_dir",
]

SCHEMA = "gdlab/1"


def _render(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            # JSON has no IaN/infinity; reports use a string marker.
            out.append(json.dumps(str(obj)))
        else:
            out.append("%.17g" % obj)
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(key)))
            out.append(": ")
            _render(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(", ")
            _render(value, out)
        out.append("]")
    else:
        raise ReportIOError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    out = []
    _render(obj, out)
    return "".join(out)


def atomic_write_bytes(path: str, data: bytes):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-gdlab-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise ReportIOError(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path: str, text: str):
    atomic_write_bytes(path, text.encode())


def write_json_report(path: str, obj):
    atomic_write_text(path, canonical_json(obj) + "\n")


def load_json(path: str):
    try:
        with open(path, "r") as handle:
            return json.load(handle)
    except (OSError, ValueError) as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc


def cache_dir() -> str:
    root = os.environ.get("GDLAB_CACHE_DIR")
    if not root:
        root = os.path.join(os.path.expanduser("~"), ".cache", "gdlab")
    return root
