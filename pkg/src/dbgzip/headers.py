"""Read header compression by field-wise delta against the previous header.

A header is cut into tokens: maximal digit runs (numeric fields), maximal
letter runs (alpha fields) and single separator bytes. Each token is compared
with the token at the same index in the previous header and replaced by one
delta op. A header whose op list is identical to the previous header's is
written as a single REPEAT op, so runs of headers that differ only by
counters advancing in lockstep cost one symbol each. Ops are range coded with
one adaptive model per field index, since the op at a given field rarely
changes from one header to the next.

Ops and their payloads (``num`` stream = varints, ``lit`` stream = bytes):

=============  =========================================================
MATCH          field identical
NUM            numeric field, zigzag delta on num
NUM_WIDTH      numeric field, zigzag delta and new digit width on num
PREFIX         common prefix length and suffix length on num, suffix on lit
RAW            rest of header: byte length on num, bytes on lit; ends header
END            header ends here
SAME_REST      every remaining field matches and the header ends
REPEAT         whole header uses the previous header's op list
=============  =========================================================
"""

from __future__ import annotations

import re
from typing import Iterable, NamedTuple

import numpy as np

from . import rangecoder as rc

SEP, NUM, ALPHA = 0, 1, 2
MAX_NUM_DIGITS = 18

MATCH, NUM_DELTA, NUM_WIDTH, PREFIX, RAW, END, SAME_REST, REPEAT = range(8)
N_OPS = 8
# ops are modelled per field index; the last context is shared by later fields
N_OP_CONTEXTS = 16
HEADER_STREAM_NAMES = ("header_ops", "header_num", "header_lit")

_TOKEN_RE = re.compile(rb"[0-9]+|[A-Za-z]+|[^0-9A-Za-z]", re.DOTALL)


class Token(NamedTuple):
    kind: int
    text: bytes


def tokenize(header: bytes) -> list[Token]:
    tokens = []
    for mt in _TOKEN_RE.finditer(header):
        text = mt.group()
        c = text[0]
        if 48 <= c <= 57:
            kind = NUM if len(text) <= MAX_NUM_DIGITS else ALPHA
        elif (65 <= c <= 90) or (97 <= c <= 122):
            kind = ALPHA
        else:
            kind = SEP
        tokens.append(Token(kind, text))
    return tokens


def detokenize(tokens: Iterable[Token]) -> bytes:
    return b"".join(t.text for t in tokens)


def _common_prefix(a: bytes, b: bytes) -> int:
    n = min(len(a), len(b))
    i = 0
    while i < n and a[i] == b[i]:
        i += 1
    return i


def diff(prev: list[Token], cur: list[Token]) -> list[tuple]:
    """Delta ops turning ``prev`` into ``cur``."""
    ops: list[tuple] = []
    # start of the trailing run that matches prev token for token
    tail = len(cur)
    if len(cur) == len(prev):
        while tail and cur[tail - 1] == prev[tail - 1]:
            tail -= 1
    for i, t in enumerate(cur):
        if i >= len(prev):
            ops.append((RAW, detokenize(cur[i:])))
            return ops
        if i == tail:
            ops.append((SAME_REST,))
            return ops
        p = prev[i]
        if t == p:
            ops.append((MATCH,))
        elif t.kind == NUM and p.kind == NUM:
            value = int(t.text)
            delta = value - int(p.text)
            if str(value).zfill(len(p.text)).encode() == t.text:
                ops.append((NUM_DELTA, delta))
            else:
                ops.append((NUM_WIDTH, delta, len(t.text)))
        elif t.kind == p.kind:
            lcp = _common_prefix(p.text, t.text)
            ops.append((PREFIX, lcp, t.text[lcp:]))
        else:
            ops.append((RAW, detokenize(cur[i:])))
            return ops
    ops.append((END,))
    return ops


def apply(prev: list[Token], ops: list[tuple]) -> bytes:
    """Rebuild the header encoded by ``ops`` against ``prev``."""
    out = []
    for i, op in enumerate(ops):
        code = op[0]
        if code == END:
            break
        if code == SAME_REST:
            out.extend(t.text for t in prev[i:])
            break
        if code == RAW:
            out.append(op[1])
            break
        if i >= len(prev):
            raise ValueError("header delta refers past the previous header")
        p = prev[i].text
        if code == MATCH:
            out.append(p)
        elif code == NUM_DELTA:
            out.append(str(int(p) + op[1]).zfill(len(p)).encode())
        elif code == NUM_WIDTH:
            out.append(str(int(p) + op[1]).zfill(op[2]).encode())
        elif code == PREFIX:
            out.append(p[: op[1]] + op[2])
        else:
            raise ValueError(f"unknown header op {code}")
    return b"".join(out)


class HeaderEncoder:
    """Header block -> three symbol streams (ops, varints, literals)."""

    def __init__(self):
        self.ops: list[int] = []
        self.op_ctx: list[int] = []
        self.nums = bytearray()
        self.lits: list[bytes] = []
        self._prev: list[Token] = []
        self._prev_ops: list[tuple] | None = None
        self.n_pre_entropy = 0

    def _num(self, v: int) -> None:
        # LE base-128; coded later through one adaptive byte model
        start = len(self.nums)
        while v >= 0x80:
            self.nums.append((v & 0x7F) | 0x80)
            v >>= 7
        self.nums.append(v)
        self.n_pre_entropy += len(self.nums) - start

    def add(self, header: bytes) -> None:
        cur = tokenize(header)
        ops = diff(self._prev, cur)
        self._prev = cur
        if ops == self._prev_ops:
            self.ops.append(REPEAT)
            self.op_ctx.append(0)
            self.n_pre_entropy += 1
            return
        self._prev_ops = ops
        for i, op in enumerate(ops):
            code = op[0]
            self.ops.append(code)
            self.op_ctx.append(min(i, N_OP_CONTEXTS - 1))
            self.n_pre_entropy += 1
            if code in (NUM_DELTA, NUM_WIDTH):
                self._num(rc.zigzag(op[1]))
                if code == NUM_WIDTH:
                    self._num(op[2])
            elif code == PREFIX:
                self._num(op[1])
                self._num(len(op[2]))
                self.lits.append(op[2])
                self.n_pre_entropy += len(op[2])
            elif code == RAW:
                self._num(len(op[1]))
                self.lits.append(op[1])
                self.n_pre_entropy += len(op[1])

    def finish(self) -> list[bytes]:
        lit = np.frombuffer(b"".join(self.lits), dtype=np.uint8)
        nums = np.frombuffer(bytes(self.nums), dtype=np.uint8)
        return [rc.encode_symbols_ctx(self.ops, self.op_ctx, N_OPS, N_OP_CONTEXTS),
                rc.encode_symbols(nums, 256),
                rc.encode_symbols(lit, 256)]


def encode_headers(headers: Iterable[bytes]) -> list[bytes]:
    enc = HeaderEncoder()
    for h in headers:
        enc.add(h)
    return enc.finish()


def decode_headers(streams: list[bytes], n: int) -> list[bytes]:
    op_dec = rc.attach(streams[0])
    op_models = [rc.FrequencyModel(N_OPS) for _ in range(N_OP_CONTEXTS)]
    num_dec = rc.attach(streams[1])
    num_model = rc.FrequencyModel(256)
    lit_dec = rc.attach(streams[2])
    lit_model = rc.FrequencyModel(256)

    def lit(length: int) -> bytes:
        return bytes(lit_dec.decode_symbol(lit_model) for _ in range(length))

    out = []
    prev: list[Token] = []
    prev_ops: list[tuple] | None = None
    for _ in range(n):
        first = op_dec.decode_symbol(op_models[0])
        if first == REPEAT:
            if prev_ops is None:
                raise ValueError("REPEAT with no previous header delta")
            ops = prev_ops
        else:
            ops = []
            code = first
            while True:
                if code in (NUM_DELTA, NUM_WIDTH):
                    delta = rc.unzigzag(num_dec.decode_varint(num_model))
                    if code == NUM_WIDTH:
                        ops.append((code, delta, num_dec.decode_varint(num_model)))
                    else:
                        ops.append((code, delta))
                elif code == PREFIX:
                    lcp = num_dec.decode_varint(num_model)
                    ops.append((code, lcp, lit(num_dec.decode_varint(num_model))))
                elif code == RAW:
                    ops.append((code, lit(num_dec.decode_varint(num_model))))
                elif code in (MATCH, END, SAME_REST):
                    ops.append((code,))
                else:
                    raise ValueError(f"unexpected header op {code}")
                if code in (RAW, END, SAME_REST):
                    break
                code = op_dec.decode_symbol(op_models[min(len(ops), N_OP_CONTEXTS - 1)])
        header = apply(prev, ops)
        out.append(header)
        prev = tokenize(header)
        prev_ops = ops
    return out
