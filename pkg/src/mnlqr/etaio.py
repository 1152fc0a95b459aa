"""Flat-file bundles of interval-expectation matrices.

The data-driven solver only ever sees the four eta matrices, so a run
can be driven by measurements collected elsewhere.  The bundle is a
single CSV-style text file: a magic line, scalar header lines, the
interval grid, then the four named blocks.  Floats are written with
full round-trip precision (repr), so export followed by import is
lossless and produces bit-identical downstream results.

    mnlqr-eta,1
    n,2
    m,1
    q,60
    rollouts,1
    mode,exact
    t0,0.0
    interval_len,0.05
    grid,0.0,0.05,...            (q + 1 values)
    block,eta_xbar,60,3
    ... 60 rows of 3 values ...
    block,eta_ubar,60,1
    block,eta_xx,60,4
    block,eta_xu,60,2
"""

from __future__ import annotations

import numpy as np

from .datagen import DataMatrices
from .errors import ConfigError
from .vecops import svec_len

MAGIC = "mnlqr-eta"
FORMAT_VERSION = 1

_BLOCK_ORDER = ("eta_xbar", "eta_ubar", "eta_xx", "eta_xu")


def _block_cols(name: str, n: int, m: int) -> int:
    return {
        "eta_xbar": svec_len(n),
        "eta_ubar": svec_len(m),
        "eta_xx": n * n,
        "eta_xu": n * m,
    }[name]


def write_eta(fh, data: DataMatrices) -> None:
    """Write a DataMatrices bundle to an open text file."""
    rollouts = data.rows // (len(data.grid) - 1)
    lines = [
        f"{MAGIC},{FORMAT_VERSION}",
        f"n,{data.n}",
        f"m,{data.m}",
        f"q,{len(data.grid) - 1}",
        f"rollouts,{rollouts}",
        f"mode,{data.mode}",
        f"t0,{data.grid[0]!r}",
        f"interval_len,{(data.grid[1] - data.grid[0])!r}",
        "grid," + ",".join(repr(float(t)) for t in data.grid),
    ]
    for name in _BLOCK_ORDER:
        block = getattr(data, name)
        lines.append(f"block,{name},{block.shape[0]},{block.shape[1]}")
        for row in block:
            lines.append(",".join(repr(float(v)) for v in row))
    fh.write("\n".join(lines) + "\n")


def save_eta(path, data: DataMatrices) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_eta(fh, data)


def _fail(lineno: int, msg: str):
    raise ConfigError(f"eta bundle line {lineno}: {msg}")


def _scalar(lines, idx: int, key: str) -> str:
    if idx >= len(lines):
        _fail(idx + 1, f"file truncated, expected '{key},...'")
    parts = lines[idx].split(",", 1)
    if len(parts) != 2 or parts[0] != key:
        _fail(idx + 1, f"expected '{key},<value>', got {lines[idx]!r}")
    return parts[1]


def read_eta(fh) -> DataMatrices:
    """Parse a bundle back into DataMatrices tagged mode="imported".

    Every structural problem (bad magic, truncation, shape mismatch,
    non-numeric cell) raises ConfigError naming the offending line.
    """
    lines = [ln.rstrip("\n") for ln in fh]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ConfigError("eta bundle line 1: empty file")
    head = lines[0].split(",")
    if len(head) != 2 or head[0] != MAGIC:
        _fail(1, f"bad magic, expected '{MAGIC},{FORMAT_VERSION}'")
    if head[1] != str(FORMAT_VERSION):
        _fail(1, f"unsupported format version {head[1]!r}")

    def int_scalar(idx, key, minimum):
        raw = _scalar(lines, idx, key)
        try:
            val = int(raw)
        except ValueError:
            _fail(idx + 1, f"{key} is not an integer: {raw!r}")
        if val < minimum:
            _fail(idx + 1, f"{key} must be >= {minimum}, got {val}")
        return val

    n = int_scalar(1, "n", 1)
    m = int_scalar(2, "m", 1)
    q = int_scalar(3, "q", 1)
    rollouts = int_scalar(4, "rollouts", 1)
    original_mode = _scalar(lines, 5, "mode")
    _scalar(lines, 6, "t0")
    _scalar(lines, 7, "interval_len")
    grid_raw = _scalar(lines, 8, "grid").split(",")
    if len(grid_raw) != q + 1:
        _fail(9, f"grid must have q+1 = {q + 1} values, got {len(grid_raw)}")
    try:
        grid = np.array([float(v) for v in grid_raw])
    except ValueError:
        _fail(9, "grid contains a non-numeric value")
    if not np.all(np.diff(grid) > 0):
        _fail(9, "grid times must be strictly increasing")

    blocks: dict[str, np.ndarray] = {}
    idx = 9
    for name in _BLOCK_ORDER:
        if idx >= len(lines):
            _fail(idx + 1, f"file truncated, expected block {name}")
        parts = lines[idx].split(",")
        if len(parts) != 4 or parts[0] != "block":
            _fail(idx + 1, f"expected 'block,{name},<rows>,<cols>', got {lines[idx]!r}")
        if parts[1] != name:
            _fail(idx + 1, f"expected block {name}, got {parts[1]!r}")
        try:
            rows, cols = int(parts[2]), int(parts[3])
        except ValueError:
            _fail(idx + 1, "block dimensions are not integers")
        want = (rollouts * q, _block_cols(name, n, m))
        if (rows, cols) != want:
            _fail(idx + 1, f"block {name} declares {(rows, cols)}, expected {want}")
        if idx + 1 + rows > len(lines):
            _fail(len(lines) + 1, f"file truncated inside block {name}")
        body = np.empty((rows, cols))
        for r in range(rows):
            cells = lines[idx + 1 + r].split(",")
            if len(cells) != cols:
                _fail(idx + 2 + r, f"expected {cols} values, got {len(cells)}")
            try:
                body[r] = [float(c) for c in cells]
            except ValueError:
                _fail(idx + 2 + r, "non-numeric value")
        blocks[name] = body
        idx += 1 + rows
    if idx != len(lines):
        _fail(idx + 1, f"{len(lines) - idx} trailing line(s) after the last block")
    return DataMatrices(
        eta_xbar=blocks["eta_xbar"],
        eta_ubar=blocks["eta_ubar"],
        eta_xx=blocks["eta_xx"],
        eta_xu=blocks["eta_xu"],
        grid=grid,
        n=n,
        m=m,
        mode="imported",
        sample_info={"original_mode": original_mode},
    )


def load_eta(path) -> DataMatrices:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return read_eta(fh)
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror or err}") from err
