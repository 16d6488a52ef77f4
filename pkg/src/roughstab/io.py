"""Text and JSON serialization of rough paths.

Text layout: one ``#``-prefixed JSON header line, a column line
``t,x1..xm,X11,X12,..,Xmm`` and one row per grid point with the anchored
second level in row-major order.  ``encoding="hex"`` writes ``float.hex``
values; the default decimal form uses ``repr``, which also round-trips
doubles exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InputError
from .rough_core import RoughPath, TimeGrid

FORMAT = "roughstab-roughpath"


def _header(rp, encoding):
    head = {"format": FORMAT, "version": 1, "m": rp.dim, "p": rp.p, "n": len(rp), "encoding": encoding}
    for key in ("hurst", "seed", "lift_level", "scale", "kind"):
        if key in rp.meta:
            head[key] = rp.meta[key]
    return head


def _columns(m):
    return ["t"] + [f"x{i + 1}" for i in range(m)] + [f"X{i + 1}{j + 1}" for i in range(m) for j in range(m)]


def dumps_text(rp, encoding="decimal"):
    if encoding not in ("decimal", "hex"):
        raise InputError(f"unknown encoding {encoding!r}")
    fmt = float.hex if encoding == "hex" else repr
    m = rp.dim
    lines = ["# " + json.dumps(_header(rp, encoding), sort_keys=True), ",".join(_columns(m))]
    flat = np.concatenate([rp.times[:, None], rp.first_level, rp.second_level.reshape(len(rp), m * m)], axis=1)
    for row in flat:
        lines.append(",".join(fmt(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def loads_text(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise InputError("missing '#' header line")
    head = json.loads(lines[0][1:])
    if head.get("format") != FORMAT:
        raise InputError(f"not a {FORMAT} file")
    m = int(head["m"])
    if lines[1].split(",") != _columns(m):
        raise InputError("column line does not match the header dimension")
    parse = float.fromhex if head.get("encoding") == "hex" else float
    rows = np.array([[parse(v) for v in ln.split(",")] for ln in lines[2:]])
    if rows.shape != (int(head["n"]), 1 + m + m * m):
        raise InputError(f"expected {head['n']} rows of {1 + m + m * m} values, got {rows.shape}")
    meta = {k: head[k] for k in ("hurst", "seed", "lift_level", "scale", "kind") if k in head}
    return RoughPath(TimeGrid(rows[:, 0]), rows[:, 1:1 + m], rows[:, 1 + m:].reshape(-1, m, m), head["p"], meta)


def to_json(rp):
    return json.dumps({
        "header": _header(rp, "json"),
        "times": rp.times.tolist(),
        "first_level": rp.first_level.tolist(),
        "second_level": rp.second_level.tolist(),
    }, sort_keys=True)


def from_json(text):
    obj = json.loads(text)
    head = obj["header"]
    if head.get("format") != FORMAT:
        raise InputError(f"not a {FORMAT} document")
    meta = {k: head[k] for k in ("hurst", "seed", "lift_level", "scale", "kind") if k in head}
    return RoughPath(TimeGrid(obj["times"]), obj["first_level"], obj["second_level"], head["p"], meta)


def save(rp, path, encoding="decimal"):
    """Write by extension: ``.json`` as JSON, anything else as text."""
    path = str(path)
    with open(path, "w") as fh:
        fh.write(to_json(rp) if path.endswith(".json") else dumps_text(rp, encoding))


def load(path):
    path = str(path)
    with open(path) as fh:
        text = fh.read()
    return from_json(text) if path.endswith(".json") else loads_text(text)
