"""Parameter checkpoints: a JSON manifest plus a raw little-endian blob.

Layout (format ``hinglish-erc-checkpoint``, version 1):

``params.json``::

    {"format": "hinglish-erc-checkpoint", "version": 1, "dtype": "<f8",
     "entries": [{"kind": "param"|"buffer", "name": str, "group": str|null,
                  "shape": [int, ...], "offset": int, "count": int}, ...]}

``params.bin``: the arrays concatenated in manifest order, each stored
C-contiguous as IEEE-754 little-endian float64. ``offset`` and ``count``
are in elements. Entries are sorted by (kind, name) so identical stores
produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from .layers import ParamStore

FORMAT = "hinglish-erc-checkpoint"
VERSION = 1
MANIFEST = "params.json"
BLOB = "params.bin"


def save_checkpoint(store: ParamStore, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    items = [("buffer", k, None, v) for k, v in store.buffers.items()]
    items += [("param", k, p.group, p.data) for k, p in store.params.items()]
    items.sort(key=lambda it: (it[0], it[1]))
    entries, chunks, offset = [], [], 0
    for kind, name, group, arr in items:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append(
            {"kind": kind, "name": name, "group": group, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)}
        )
        chunks.append(arr.tobytes())
        offset += arr.size
    manifest = {"format": FORMAT, "version": VERSION, "dtype": "<f8", "entries": entries}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (directory / BLOB).write_bytes(b"".join(chunks))


def load_checkpoint(store: ParamStore, directory: str | Path) -> None:
    """Fill an already-built store in place; names, groups and shapes must match."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text(encoding="utf-8"))
        blob = np.frombuffer((directory / BLOB).read_bytes(), dtype="<f8")
    except FileNotFoundError as exc:
        raise DataError(f"checkpoint incomplete: {exc.filename}") from None
    if manifest.get("format") != FORMAT or manifest.get("version") != VERSION:
        raise DataError(f"unsupported checkpoint format in {directory}")
    seen = set()
    for e in manifest["entries"]:
        arr = blob[e["offset"] : e["offset"] + e["count"]].reshape(e["shape"])
        name = e["name"]
        if e["kind"] == "param":
            if name not in store.params:
                raise DataError(f"checkpoint parameter {name!r} not in model")
            p = store.params[name]
            if p.group != e["group"] or p.data.shape != arr.shape:
                raise DataError(f"checkpoint parameter {name!r} does not match the model")
            p.tensor.data[...] = arr
        else:
            if name not in store.buffers or store.buffers[name].shape != arr.shape:
                raise DataError(f"checkpoint buffer {name!r} does not match the model")
            store.buffers[name][...] = arr
        seen.add((e["kind"], name))
    missing = {("param", k) for k in store.params} | {("buffer", k) for k in store.buffers}
    missing -= seen
    if missing:
        raise DataError(f"checkpoint lacks entries: {sorted(n for _, n in missing)}")
