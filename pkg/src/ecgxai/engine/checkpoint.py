"""Flat binary checkpoints: named float32 arrays plus a text index.

Layout: `<path>` holds the little-endian float32 values of every array
back to back; `<path>.idx` lists one entry per line as

    name<TAB>dim0xdim1x...<TAB>offset_in_values

in write order. Reloading gives back float64 arrays whose values are the
stored float32s exactly, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import IntegrityError


def save_checkpoint(arrays: dict[str, np.ndarray], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    offset = 0
    lines = []
    with open(path, "wb") as fh:
        for name, arr in arrays.items():
            if "\t" in name or "\n" in name:
                raise ValueError(f"array name {name!r} contains separator characters")
            a32 = np.ascontiguousarray(arr, dtype="<f4")
            fh.write(a32.tobytes())
            dims = "x".join(str(d) for d in arr.shape) if arr.shape else "0"
            lines.append(f"{name}\t{dims}\t{offset}")
            offset += a32.size
    Path(str(path) + ".idx").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    index_path = Path(str(path) + ".idx")
    if not path.exists() or not index_path.exists():
        raise FileNotFoundError(f"checkpoint {path} (or its .idx) not found")
    raw = np.fromfile(path, dtype="<f4")
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(index_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            name, dims, offset_s = line.split("\t")
            shape = tuple(int(d) for d in dims.split("x")) if dims != "0" else ()
            offset = int(offset_s)
        except ValueError as exc:
            raise IntegrityError(f"{index_path}:{lineno}: malformed index line") from exc
        count = int(np.prod(shape)) if shape else 1
        if offset + count > raw.size:
            raise IntegrityError(f"{index_path}:{lineno}: {name!r} extends past end of data file")
        out[name] = raw[offset : offset + count].astype(np.float64).reshape(shape)
    return out
