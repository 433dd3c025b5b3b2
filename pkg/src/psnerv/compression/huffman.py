"""Canonical Huffman coding over integer symbols.

Only code lengths are stored; codes are rebuilt canonically (sorted by
``(length, symbol)``), so encoder and decoder agree bit for bit.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import CorruptionError, DataError

_LUT_MAX_BITS = 20


@dataclass(frozen=True)
class HuffmanTable:
    lengths: dict  # symbol -> code length

    def __post_init__(self):
        if not self.lengths:
            raise DataError("Huffman table needs at least one symbol")

    @property
    def max_length(self):
        return max(self.lengths.values())

    def kraft_sum(self):
        return sum(2.0 ** -n for n in self.lengths.values())

    def codes(self):
        """Canonical ``symbol -> (code, length)``."""
        out = {}
        code = 0
        prev = 0
        for sym, n in sorted(self.lengths.items(), key=lambda kv: (kv[1], kv[0])):
            code <<= n - prev
            out[sym] = (code, n)
            code += 1
            prev = n
        return out


def huffman_build(frequencies):
    """Optimal code lengths for ``{symbol: count}``; a lone symbol gets length 1."""
    items = sorted((int(s), int(c)) for s, c in frequencies.items() if c > 0)
    if not items:
        raise DataError("cannot build a Huffman table from an empty frequency map")
    if len(items) == 1:
        return HuffmanTable({items[0][0]: 1})
    # heap entries: (count, tiebreak, symbols under this node)
    tick = itertools.count()
    heap = [(c, next(tick), [s]) for s, c in items]
    heapq.heapify(heap)
    depth = {s: 0 for s, _ in items}
    while len(heap) > 1:
        c1, _, s1 = heapq.heappop(heap)
        c2, _, s2 = heapq.heappop(heap)
        for s in s1:
            depth[s] += 1
        for s in s2:
            depth[s] += 1
        heapq.heappush(heap, (c1 + c2, next(tick), s1 + s2))
    return HuffmanTable(depth)


def frequencies_of(codes):
    vals, counts = np.unique(np.asarray(codes, dtype=np.int64), return_counts=True)
    return dict(zip(vals.tolist(), counts.tolist()))


def huffman_encode(codes, table):
    """Pack symbols into an MSB-first bitstream, zero-padded to a byte boundary."""
    syms = np.asarray(codes, dtype=np.int64).ravel()
    if syms.size == 0:
        return b""
    cmap = table.codes()
    alphabet = np.array(sorted(cmap), dtype=np.int64)
    pos = np.searchsorted(alphabet, syms)
    pos = np.clip(pos, 0, len(alphabet) - 1)
    if not np.array_equal(alphabet[pos], syms):
        missing = sorted(set(syms.tolist()) - set(cmap))[:5]
        raise DataError(f"symbols not in Huffman table: {missing}")
    code_vals = np.array([cmap[s][0] for s in alphabet.tolist()], dtype=np.uint64)[pos]
    code_lens = np.array([cmap[s][1] for s in alphabet.tolist()], dtype=np.int64)[pos]
    L = int(code_lens.max())
    j = np.arange(L, dtype=np.int64)
    shift = code_lens[:, None] - 1 - j[None, :]
    valid = shift >= 0
    bits = ((code_vals[:, None] >> np.where(valid, shift, 0).astype(np.uint64)) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits[valid]).tobytes()


def huffman_decode(data, table, count):
    """Decode ``count`` symbols from ``data``."""
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    cmap = table.codes()
    L = table.max_length
    if L <= _LUT_MAX_BITS:
        return _decode_lut(bits, cmap, L, count)
    return _decode_canonical(bits, cmap, count)


def _decode_lut(bits, cmap, L, count):
    size = 1 << L
    lut_sym = np.full(size, -1, dtype=np.int64)
    lut_len = np.zeros(size, dtype=np.int64)
    for sym, (code, n) in cmap.items():
        lo = code << (L - n)
        hi = lo + (1 << (L - n))
        lut_sym[lo:hi] = sym
        lut_len[lo:hi] = n
    nbits = len(bits)
    padded = np.concatenate([bits, np.zeros(L, dtype=np.uint8)]).astype(np.int64)
    # peek[p] = the L bits starting at bit p, as an integer
    peek = np.zeros(nbits, dtype=np.int64)
    for j in range(L):
        peek = (peek << 1) | padded[j:j + nbits]
    peek = peek.tolist()
    sym_l = lut_sym.tolist()
    len_l = lut_len.tolist()
    out = [0] * count
    p = 0
    for i in range(count):
        if p >= nbits:
            raise CorruptionError(f"bitstream truncated after {i} of {count} symbols", field="payload")
        v = peek[p]
        n = len_l[v]
        if n == 0:
            raise CorruptionError(f"invalid code at bit {p}", field="payload")
        p += n
        if p > nbits:
            raise CorruptionError(f"bitstream truncated after {i} of {count} symbols", field="payload")
        out[i] = sym_l[v]
    return np.asarray(out, dtype=np.int64)


def _decode_canonical(bits, cmap, count):
    by_code = {(n, code): sym for sym, (code, n) in cmap.items()}
    max_len = max(n for _, n in by_code)
    out = np.empty(count, dtype=np.int64)
    bl = bits.tolist()
    p = 0
    for i in range(count):
        code = n = 0
        while True:
            if p >= len(bl):
                raise CorruptionError(f"bitstream truncated after {i} of {count} symbols", field="payload")
            code = (code << 1) | bl[p]
            p += 1
            n += 1
            if (n, code) in by_code:
                out[i] = by_code[(n, code)]
                break
            if n > max_len:
                raise CorruptionError(f"invalid code at bit {p - n}", field="payload")
    return out


def entropy_bits(codes):
    """Empirical entropy in bits per symbol."""
    freqs = np.array(list(frequencies_of(codes).values()), dtype=np.float64)
    if freqs.size == 0:
        return 0.0
    p = freqs / freqs.sum()
    return float(-(p * np.log2(p)).sum())


def mean_code_length(codes, table):
    freqs = frequencies_of(codes)
    total = sum(freqs.values())
    if total == 0:
        return 0.0
    return sum(c * table.lengths[s] for s, c in freqs.items()) / total


__all__ = [
    "HuffmanTable", "huffman_build", "huffman_encode", "huffman_decode",
    "frequencies_of", "entropy_bits", "mean_code_length",
]
