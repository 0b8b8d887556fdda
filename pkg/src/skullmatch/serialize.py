"""Binary model container ("XFML") and CSV export.

All files start with the magic bytes ``XFML`` followed by a 32-bit
unsigned little-endian format version.  Payload layouts:

  transform file   [d:u32] [T: d*d f64 row-major] [lam:f64] [eps:f64] [tau:u32]
  coupled file     two transform payloads (face, skull), then
                   [W: d*d f64 row-major] [gamma:f64] [rho:f64]
  dictionary file  [rows:u32] [cols:u32] [D: f64 row-major] [s:u32]
  feature file     [rows:u32] [cols:u32] [data: f64 row-major]

All floats are 64-bit IEEE-754 little-endian; round-trips are bit-exact.
The file kind is not self-describing: callers use the loader matching the
writer.  CSV feature export puts one sample per column with a header row
of sample ids; floats are printed with 17 significant digits so the text
round-trips exactly.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

from .errors import ArgumentError, DataError

MAGIC = b"XFML"
FORMAT_VERSION = 1

__all__ = [
    "save_transform",
    "load_transform",
    "save_coupled",
    "load_coupled",
    "save_dictionary",
    "load_dictionary",
    "save_feature_matrix",
    "load_feature_matrix",
    "export_features_csv",
    "import_features_csv",
    "format_float",
    "to_json",
]


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (exact f64 round-trip)."""
    if not np.isfinite(x):
        raise ArgumentError(f"cannot serialize non-finite value {x!r}")
    return format(float(x), ".17g")


def _pack_transform(model) -> bytes:
    T = np.ascontiguousarray(model.T, dtype="<f8")
    d = T.shape[0]
    out = struct.pack("<I", d)
    out += T.tobytes()
    out += struct.pack("<dd", model.params.lam, model.params.eps)
    out += struct.pack("<I", model.params.tau)
    return out


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated XFML file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def matrix(self, rows: int, cols: int) -> np.ndarray:
        raw = self.take(8 * rows * cols)
        return np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()

    def done(self):
        if self.pos != len(self.data):
            raise DataError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


def _open_reader(path) -> _Reader:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise DataError(f"{path}: not an XFML file")
    version = struct.unpack("<I", data[4:8])[0]
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported XFML version {version}")
    r = _Reader(data, str(path))
    r.pos = 8
    return r


def _read_transform(r: _Reader):
    from .transform import TransformModel, TransformParams

    d = r.u32()
    T = r.matrix(d, d)
    lam = r.f64()
    eps = r.f64()
    tau = r.u32()
    return TransformModel(T=T, params=TransformParams(lam=lam, eps=eps, tau=tau))


def save_transform(path, model) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", FORMAT_VERSION) + _pack_transform(model))


def load_transform(path):
    r = _open_reader(path)
    model = _read_transform(r)
    r.done()
    return model


def save_coupled(path, model) -> None:
    W = np.ascontiguousarray(model.W, dtype="<f8")
    payload = _pack_transform(model.face) + _pack_transform(model.skull)
    payload += W.tobytes()
    payload += struct.pack("<dd", model.gamma, model.rho)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", FORMAT_VERSION) + payload)


def load_coupled(path):
    from .coupled import CoupledModel

    r = _open_reader(path)
    face = _read_transform(r)
    skull = _read_transform(r)
    d = face.dim
    W = r.matrix(d, d)
    gamma = r.f64()
    rho = r.f64()
    r.done()
    return CoupledModel(face=face, skull=skull, W=W, gamma=gamma, rho=rho)


def save_dictionary(path, dico) -> None:
    D = np.ascontiguousarray(dico.D, dtype="<f8")
    payload = struct.pack("<II", D.shape[0], D.shape[1]) + D.tobytes()
    payload += struct.pack("<I", dico.sparsity)
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", FORMAT_VERSION) + payload)


def load_dictionary(path):
    from .dictbase import Dictionary

    r = _open_reader(path)
    rows = r.u32()
    cols = r.u32()
    D = r.matrix(rows, cols)
    s = r.u32()
    r.done()
    return Dictionary(D=D, sparsity=s)


def save_feature_matrix(path, X) -> None:
    X = np.ascontiguousarray(X, dtype="<f8")
    if X.ndim != 2:
        raise ArgumentError("feature matrix must be 2-d")
    payload = struct.pack("<II", X.shape[0], X.shape[1]) + X.tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<I", FORMAT_VERSION) + payload)


def load_feature_matrix(path) -> np.ndarray:
    r = _open_reader(path)
    rows = r.u32()
    cols = r.u32()
    X = r.matrix(rows, cols)
    r.done()
    return X


def export_features_csv(path, X, sample_ids: Sequence[str]) -> None:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ArgumentError("feature matrix must be 2-d")
    if len(sample_ids) != X.shape[1]:
        raise ArgumentError(
            f"{len(sample_ids)} ids for {X.shape[1]} feature columns"
        )
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(str(s) for s in sample_ids) + "\n")
        for row in X:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def import_features_csv(path):
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty CSV")
    ids = lines[0].split(",")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    X = np.asarray(rows, dtype=np.float64)
    if X.size and X.shape[1] != len(ids):
        raise DataError(f"{path}: ragged CSV")
    return X, ids


def _json_fragment(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        import json

        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            _json_fragment(str(k), out)
            out.append(":")
            _json_fragment(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _json_fragment(v, out)
        out.append("]")
    else:
        raise ArgumentError(f"cannot serialize {type(obj).__name__} to JSON")


def to_json(obj) -> str:
    """JSON text with every float at 17 significant digits.

    Key order follows dict insertion order, so identical inputs yield
    byte-identical output.
    """
    out: list = []
    _json_fragment(obj, out)
    return "".join(out)
