"""Checkpoint files: a text manifest followed by raw tensor payloads.

Layout, in order:

    invarep-checkpoint <version>
    config <n_config_lines>
    <config echo, one line each>
    tensors <n_tensors>
    <name> <dim0> <dim1> ...
    end
    <payload: each tensor as little-endian float64, manifest order>

The manifest is ASCII and human-readable; the payload is bit-exact, so
save followed by load returns arrays with identical bytes.  Any version
other than the current one is rejected outright.
"""

from __future__ import annotations

import io

import numpy as np

from .errors import CheckpointError

CHECKPOINT_VERSION = 1
_MAGIC = "invarep-checkpoint"


def save_checkpoint(path, config_lines, tensors) -> None:
    """``tensors`` is a name -> array mapping; insertion order is the
    payload order.  Names must be single tokens."""
    manifest = io.StringIO()
    manifest.write(f"{_MAGIC} {CHECKPOINT_VERSION}\n")
    config_lines = list(config_lines)
    manifest.write(f"config {len(config_lines)}\n")
    for line in config_lines:
        if "\n" in line:
            raise ValueError("config lines must not contain newlines")
        manifest.write(line + "\n")
    manifest.write(f"tensors {len(tensors)}\n")
    payload = []
    for name, arr in tensors.items():
        if " " in name or not name:
            raise ValueError(f"bad tensor name {name!r}")
        arr = np.asarray(arr, dtype="<f8")
        dims = " ".join(str(d) for d in arr.shape)
        manifest.write(f"{name} {dims}".rstrip() + "\n")
        payload.append(arr.tobytes())
    manifest.write("end\n")
    with open(path, "wb") as f:
        f.write(manifest.getvalue().encode("ascii"))
        for chunk in payload:
            f.write(chunk)


def _read_line(buf, path):
    line = buf.readline()
    if not line:
        raise CheckpointError(f"{path}: truncated manifest")
    return line.decode("ascii").rstrip("\n")


def load_checkpoint(path):
    """Returns (config_lines, tensors).  Raises CheckpointError on a
    version mismatch, malformed manifest, or short/overlong payload."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint: {e}")
    buf = io.BytesIO(raw)

    head = _read_line(buf, path).split()
    if len(head) != 2 or head[0] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if head[1] != str(CHECKPOINT_VERSION):
        raise CheckpointError(
            f"{path}: version {head[1]} not supported (expected {CHECKPOINT_VERSION})"
        )

    tag, _, count = _read_line(buf, path).partition(" ")
    if tag != "config":
        raise CheckpointError(f"{path}: expected config section")
    config_lines = [_read_line(buf, path) for _ in range(int(count))]

    tag, _, count = _read_line(buf, path).partition(" ")
    if tag != "tensors":
        raise CheckpointError(f"{path}: expected tensors section")
    specs = []
    for _ in range(int(count)):
        parts = _read_line(buf, path).split()
        specs.append((parts[0], tuple(int(d) for d in parts[1:])))
    if _read_line(buf, path) != "end":
        raise CheckpointError(f"{path}: manifest missing end marker")

    tensors = {}
    for name, shape in specs:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        chunk = buf.read(8 * n)
        if len(chunk) != 8 * n:
            raise CheckpointError(f"{path}: payload ends inside tensor {name}")
        tensors[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
    if buf.read(1):
        raise CheckpointError(f"{path}: trailing bytes after payload")
    return config_lines, tensors
