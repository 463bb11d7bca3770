"""Checkpoint directories: a manifest plus one tensor file per entry.

``manifest.tsv`` lists, per line: entry name, kind (param or buffer), dims
joined by 'x', the tensor file name, and the byte offset of the raw data
inside that file. Kept as text so a checkpoint can be inspected with any
pager. Round trips are bit exact.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import DataError
from .backbone import Network
from .tensorio import header_size, read_tensor, write_tensor

MANIFEST_NAME = "manifest.tsv"


def _entries(net: Network):
    for name, tensor in net.named_params():
        yield name, "param", tensor.data
    for name, array in net.named_buffers():
        yield name, "buffer", array


def save_checkpoint(net: Network, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = []
    for index, (name, kind, array) in enumerate(_entries(net)):
        filename = f"{index:05d}.strf"
        write_tensor(os.path.join(directory, filename), np.asarray(array, dtype=np.float32))
        dims = "x".join(str(d) for d in array.shape)
        lines.append(f"{name}\t{kind}\t{dims}\t{filename}\t{header_size(array.ndim)}")
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(net: Network, directory: str) -> None:
    """Restore every parameter and buffer in place. The checkpoint must cover
    exactly the network's entries, with matching dims."""
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise DataError(f"{manifest_path}: checkpoint manifest not found")
    stored: dict[str, tuple[str, tuple[int, ...], str]] = {}
    with open(manifest_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DataError(f"{manifest_path}:{line_no}: expected 5 tab-separated fields")
            name, kind, dims_text, filename, _offset = parts
            dims = tuple(int(d) for d in dims_text.split("x")) if dims_text else ()
            stored[name] = (kind, dims, filename)

    expected = {name: (kind, array) for name, kind, array in _entries(net)}
    missing = sorted(set(expected) - set(stored))
    extra = sorted(set(stored) - set(expected))
    if missing or extra:
        raise DataError(
            f"{directory}: checkpoint does not match the network "
            f"(missing {missing[:3]}{'...' if len(missing) > 3 else ''}, "
            f"unexpected {extra[:3]}{'...' if len(extra) > 3 else ''})"
        )
    for name, (kind, dims, filename) in stored.items():
        target_kind, target = expected[name]
        if kind != target_kind:
            raise DataError(f"{directory}: entry {name} is a {kind}, expected {target_kind}")
        if dims != target.shape:
            raise DataError(f"{directory}: entry {name} has dims {dims}, network expects {target.shape}")
        value = read_tensor(os.path.join(directory, filename))
        if value.shape != target.shape:
            raise DataError(f"{directory}: file for {name} holds dims {value.shape}, manifest says {dims}")
        target[...] = value.astype(target.dtype, copy=False)
