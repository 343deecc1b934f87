"""Versioned text serialization for networks: bit-exact round trips.

Floats are written as C99 hex literals (`float.hex()`), which reproduce the
exact bit pattern on load.  The format is line-oriented and diff-friendly:

    featcast-net v1
    meta <key>=<value> ...
    layer conv1d ch_in=1 ch_out=128 kernel=8
    array w 128,1,8
    <hex hex hex ...>
    ...
    end
"""

from __future__ import annotations

import numpy as np

from .layers import BatchNorm1d, Conv1d, Dense, GlobalAvgPool, Network, ReLU

MAGIC = "featcast-net v1"
_VALUES_PER_LINE = 64


def _write_array(lines: list[str], name: str, arr: np.ndarray) -> None:
    lines.append(f"array {name} {','.join(str(d) for d in arr.shape)}")
    flat = arr.ravel()
    for i in range(0, flat.size, _VALUES_PER_LINE):
        lines.append(" ".join(float(v).hex() for v in flat[i : i + _VALUES_PER_LINE]))


def save_network(path, net: Network, meta: dict[str, str] | None = None) -> None:
    lines = [MAGIC]
    if meta:
        for key, value in meta.items():
            if any(c in str(value) for c in "\n="):
                raise ValueError(f"meta value for {key!r} may not contain '=' or newlines")
            lines.append(f"meta {key}={value}")
    for layer in net.layers:
        if isinstance(layer, Conv1d):
            lines.append(f"layer conv1d ch_in={layer.ch_in} ch_out={layer.ch_out} kernel={layer.kernel}")
            _write_array(lines, "w", layer.w)
            _write_array(lines, "b", layer.b)
        elif isinstance(layer, BatchNorm1d):
            lines.append(
                f"layer batchnorm channels={layer.channels} momentum={float(layer.momentum).hex()} "
                f"eps={float(layer.eps).hex()} initialized={int(layer.initialized)}"
            )
            _write_array(lines, "gamma", layer.gamma)
            _write_array(lines, "beta", layer.beta)
            _write_array(lines, "running_mean", layer.running_mean)
            _write_array(lines, "running_var", layer.running_var)
        elif isinstance(layer, ReLU):
            lines.append("layer relu")
        elif isinstance(layer, GlobalAvgPool):
            lines.append("layer gap")
        elif isinstance(layer, Dense):
            lines.append(f"layer dense n_in={layer.n_in} n_out={layer.n_out}")
            _write_array(lines, "w", layer.w)
            _write_array(lines, "b", layer.b)
        else:
            raise ValueError(f"cannot serialize layer kind {layer.kind!r}")
    lines.append("end")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, lines: list[str]):
        self.lines = lines
        self.pos = 0

    def peek(self) -> str:
        return self.lines[self.pos] if self.pos < len(self.lines) else ""

    def next(self) -> str:
        line = self.peek()
        self.pos += 1
        return line


def _read_array(reader: _Reader, expect_name: str) -> np.ndarray:
    header = reader.next().split()
    if len(header) != 3 or header[0] != "array" or header[1] != expect_name:
        raise ValueError(f"expected array {expect_name!r}, got line {header!r}")
    shape = tuple(int(d) for d in header[2].split(","))
    size = int(np.prod(shape)) if shape else 1
    values: list[float] = []
    while len(values) < size:
        values.extend(float.fromhex(tok) for tok in reader.next().split())
    if len(values) != size:
        raise ValueError(f"array {expect_name!r}: expected {size} values, got {len(values)}")
    return np.array(values, dtype=np.float64).reshape(shape)


def _kv(fields: list[str]) -> dict[str, str]:
    return dict(f.split("=", 1) for f in fields)


def load_network(path) -> tuple[Network, dict[str, str]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    reader = _Reader(lines)
    if reader.next() != MAGIC:
        raise ValueError(f"{path}: not a {MAGIC!r} file")
    meta: dict[str, str] = {}
    while reader.peek().startswith("meta "):
        key, value = reader.next()[len("meta "):].split("=", 1)
        meta[key] = value
    layers = []
    while True:
        line = reader.next()
        if line == "end":
            break
        if not line.startswith("layer "):
            raise ValueError(f"unexpected line in network file: {line!r}")
        fields = line.split()
        kind = fields[1]
        opts = _kv(fields[2:])
        if kind == "conv1d":
            layer = Conv1d(int(opts["ch_in"]), int(opts["ch_out"]), int(opts["kernel"]))
            layer.w = _read_array(reader, "w")
            layer.b = _read_array(reader, "b")
            layer.gw = np.zeros_like(layer.w)
            layer.gb = np.zeros_like(layer.b)
        elif kind == "batchnorm":
            layer = BatchNorm1d(int(opts["channels"]), float.fromhex(opts["momentum"]), float.fromhex(opts["eps"]))
            layer.gamma = _read_array(reader, "gamma")
            layer.beta = _read_array(reader, "beta")
            layer.running_mean = _read_array(reader, "running_mean")
            layer.running_var = _read_array(reader, "running_var")
            layer.initialized = bool(int(opts["initialized"]))
            layer.ggamma = np.zeros_like(layer.gamma)
            layer.gbeta = np.zeros_like(layer.beta)
        elif kind == "relu":
            layer = ReLU()
        elif kind == "gap":
            layer = GlobalAvgPool()
        elif kind == "dense":
            layer = Dense(int(opts["n_in"]), int(opts["n_out"]))
            layer.w = _read_array(reader, "w")
            layer.b = _read_array(reader, "b")
            layer.gw = np.zeros_like(layer.w)
            layer.gb = np.zeros_like(layer.b)
        else:
            raise ValueError(f"unknown layer kind {kind!r} in network file")
        layers.append(layer)
    return Network(layers), meta
