"""Versioned little-endian model file.

Layout::

    magic        5 bytes  b"PSNV1"
    version      u16
    meta_len     u32, then meta_len bytes of UTF-8 JSON ({"arch": ..., "compression": ..., ...})
    n_tensors    u32
    table_mode   u8       0 = raw float32, 1 = one global Huffman table, 2 = one table per tensor
    [global table]        present when table_mode == 1
    n_tensors records:
        name_len u16, name UTF-8
        ndim u8, dims u32 * ndim
        bits u8           0 for raw float32
        theta_min f64
        scale f64
        [table]           present when table_mode == 2
        n_symbols u32
        payload_len u32, payload
    crc32        u32 over every preceding byte

A table is ``n_entries u32`` followed by ``(symbol u16, length u8)`` pairs
sorted by symbol.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, CorruptionError
from ..model import ArchConfig, ModelParams, check_params, param_count
from ..numerics import Parameter
from .huffman import HuffmanTable, frequencies_of, huffman_build, huffman_decode, huffman_encode
from .quantize import QuantTensor, dequantize, prune_global, quantize

MAGIC = b"PSNV1"
VERSION = 1
RAW, GLOBAL, PER_TENSOR = 0, 1, 2
_MODES = {"raw": RAW, "global": GLOBAL, "per-tensor": PER_TENSOR}


def _pack_table(table):
    items = sorted(table.lengths.items())
    out = bytearray(struct.pack("<I", len(items)))
    for sym, n in items:
        out += struct.pack("<HB", sym, n)
    return bytes(out)


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass
class CompressionReport:
    n_params: int
    raw_bytes: int
    pruned: int
    prunable: int
    sparsity: float
    bits: int | None
    quantized_bytes: int
    payload_bytes: int
    file_bytes: int
    sections: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


def _encode(params, arch, qtensors, mode, meta):
    names = [p.name for p in params]
    body = bytearray(MAGIC)
    body += struct.pack("<H", VERSION)
    mj = _canonical_json(meta)
    body += struct.pack("<I", len(mj)) + mj
    body += struct.pack("<I", len(names))
    body += struct.pack("<B", mode)
    global_table = None
    if mode == GLOBAL:
        allcodes = np.concatenate([qtensors[n].codes for n in names]) if names else np.zeros(0, np.int64)
        global_table = huffman_build(frequencies_of(allcodes) or {0: 1})
        body += _pack_table(global_table)
    for n in names:
        shape = params[n].shape
        nb = n.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<B", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)
        if mode == RAW:
            payload = np.ascontiguousarray(params[n].value, dtype="<f4").tobytes()
            body += struct.pack("<Bdd", 0, 0.0, 0.0)
            count = int(params[n].value.size)
        else:
            q = qtensors[n]
            body += struct.pack("<Bdd", q.bits, q.theta_min, q.scale)
            table = global_table
            if mode == PER_TENSOR:
                table = huffman_build(frequencies_of(q.codes) or {0: 1})
                body += _pack_table(table)
            payload = huffman_encode(q.codes, table)
            count = int(q.codes.size)
        body += struct.pack("<II", count, len(payload)) + payload
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    return bytes(body)


def save_raw(params, arch, meta=None):
    """Uncompressed float32 checkpoint in the same container."""
    check_params(params, arch)
    m = dict(meta or {})
    m["arch"] = arch.to_dict()
    m["compression"] = {"bits": None, "sparsity": 0.0, "pruned": 0, "table_mode": "raw"}
    return _encode(params, arch, None, RAW, m)


def compress(params, arch, bits=8, sparsity=0.0, table_mode="global", meta=None):
    """Prune, quantize and entropy-code ``params``; returns ``(file bytes, CompressionReport)``."""
    check_params(params, arch)
    if table_mode not in ("global", "per-tensor"):
        raise ConfigurationError(f"table_mode must be 'global' or 'per-tensor', got {table_mode!r}")
    if not (isinstance(bits, (int, np.integer)) and 1 <= bits <= 16):
        raise ConfigurationError(f"bits must be an integer in [1, 16], got {bits}")
    pruned, mask = prune_global(params, sparsity)
    qt = {p.name: quantize(p.value, bits) for p in pruned}
    m = dict(meta or {})
    m["arch"] = arch.to_dict()
    m["compression"] = {
        "bits": int(bits), "sparsity": float(sparsity), "pruned": mask.n_pruned,
        "prunable": mask.n_prunable, "table_mode": table_mode,
    }
    data = _encode(pruned, arch, qt, _MODES[table_mode], m)
    info = inspect_bytes(data)
    n = param_count(params)
    report = CompressionReport(
        n_params=n,
        raw_bytes=4 * n,
        pruned=mask.n_pruned,
        prunable=mask.n_prunable,
        sparsity=float(sparsity),
        bits=int(bits),
        quantized_bytes=(n * bits + 7) // 8,
        payload_bytes=info["sections"]["payload"],
        file_bytes=len(data),
        sections=info["sections"],
    )
    return data, report


def save(params, arch, bits=8, sparsity=0.0, table_mode="global", meta=None):
    return compress(params, arch, bits, sparsity, table_mode, meta)[0]


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise CorruptionError(f"file truncated while reading {what}", field=what)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))


def _read_table(r, what):
    (n,) = r.unpack("I", what)
    lengths = {}
    for _ in range(n):
        sym, ln = r.unpack("HB", what)
        lengths[sym] = ln
    if not lengths:
        raise CorruptionError(f"empty Huffman table in {what}", field=what)
    return HuffmanTable(lengths)


def _parse(data, decode=True):
    data = bytes(data)
    if len(data) < len(MAGIC) + 2 + 4 or data[:len(MAGIC)] != MAGIC:
        raise CorruptionError("bad magic: not a PSNV1 model file", field="magic")
    (version,) = struct.unpack_from("<H", data, len(MAGIC))
    if version != VERSION:
        raise CorruptionError(f"unsupported format version {version}", field="version")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise CorruptionError("checksum mismatch: file is corrupted", field="checksum")

    r = _Reader(data[:-4])
    r.take(len(MAGIC) + 2, "magic")
    (mlen,) = r.unpack("I", "meta")
    try:
        meta = json.loads(r.take(mlen, "meta").decode("utf-8"))
        arch = ArchConfig.from_dict(meta["arch"])
    except (ValueError, KeyError, TypeError) as e:
        raise CorruptionError(f"unreadable metadata: {e}", field="meta") from e
    (n_tensors,) = r.unpack("I", "tensor count")
    (mode,) = r.unpack("B", "table mode")
    if mode not in (RAW, GLOBAL, PER_TENSOR):
        raise CorruptionError(f"unknown table mode {mode}", field="table mode")
    sections = {"header": r.pos, "tables": 0, "records": 0, "payload": 0, "checksum": 4}
    gtable = None
    if mode == GLOBAL:
        start = r.pos
        gtable = _read_table(r, "global table")
        sections["tables"] += r.pos - start
    tensors = []
    arrays = {}
    for i in range(n_tensors):
        start = r.pos
        (nl,) = r.unpack("H", f"record {i}")
        name = r.take(nl, f"record {i}").decode("utf-8", errors="replace")
        what = f"record {name}"
        (ndim,) = r.unpack("B", what)
        shape = r.unpack(f"{ndim}I", what) if ndim else ()
        bits, tmin, scale = r.unpack("Bdd", what)
        table = gtable
        tstart = r.pos
        if mode == PER_TENSOR:
            table = _read_table(r, what)
        tbytes = r.pos - tstart
        count, plen = r.unpack("II", what)
        size = int(np.prod(shape)) if shape else 1
        if count != size:
            raise CorruptionError(f"{what}: {count} symbols declared for shape {shape}", field=what)
        sections["records"] += r.pos - start - tbytes
        sections["tables"] += tbytes
        payload = r.take(plen, what)
        sections["payload"] += plen
        tensors.append({"name": name, "shape": list(shape), "bits": bits or None,
                        "theta_min": tmin, "scale": scale, "payload_bytes": plen,
                        "table_entries": len(table.lengths) if (table is not None and mode == PER_TENSOR) else None})
        if decode:
            if mode == RAW:
                if plen != 4 * size:
                    raise CorruptionError(f"{what}: raw payload is {plen} bytes, expected {4 * size}", field=what)
                arrays[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
            else:
                codes = huffman_decode(payload, table, count)
                arrays[name] = dequantize(QuantTensor(bits, tmin, scale, codes, shape))
    if r.pos != len(r.data):
        raise CorruptionError(f"{len(r.data) - r.pos} unexpected trailing bytes", field="payload")
    info = {
        "magic": MAGIC.decode(), "version": version, "meta": meta, "table_mode":
        {RAW: "raw", GLOBAL: "global", PER_TENSOR: "per-tensor"}[mode],
        "global_table_entries": len(gtable.lengths) if gtable else None,
        "tensors": tensors, "sections": sections, "file_bytes": len(data),
    }
    return arch, arrays, info


@dataclass
class LoadedModel:
    params: ModelParams
    arch: ArchConfig
    meta: dict


def load(data):
    """Decode a model file into float32 parameters and its architecture."""
    arch, arrays, info = _parse(data)
    params = ModelParams(Parameter(n, a.copy()) for n, a in arrays.items())
    check_params(params, arch)
    return LoadedModel(params, arch, info["meta"])


def inspect_bytes(data):
    """Header, per-tensor records and per-section byte counts, without decoding payloads."""
    arch, _, info = _parse(data, decode=False)
    n = sum(int(np.prod(t["shape"])) if t["shape"] else 1 for t in info["tensors"])
    comp = info["meta"].get("compression", {})
    pruned = comp.get("pruned", 0)
    prunable = comp.get("prunable", 0)
    info["param_count"] = n
    info["bits"] = comp.get("bits")
    info["sparsity"] = pruned / prunable if prunable else 0.0
    return info
