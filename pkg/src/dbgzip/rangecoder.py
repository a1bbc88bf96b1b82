"""Adaptive order-0 range coder.

Byte-oriented range coder with a 32-bit range register, a 33-bit low
register and a cache byte plus pending 0xFF run for carry propagation
(the scheme used by LZMA). A model is an int64 array of ``A + 1`` entries:
symbol counts followed by their total.

All numba kernels keep registers in int64 so no uint/int mixing can promote
to float.
"""

from __future__ import annotations

import numba as nb
import numpy as np

TOP = 1 << 24
RANGE_INIT = 0xFFFFFFFF
INCREMENT = 16
RESCALE_LIMIT = 1 << 16
FLUSH_BYTES = 5

# encoder state slots
_LOW, _RANGE, _CACHE, _CACHE_SIZE, _NOUT = 0, 1, 2, 3, 4
# decoder state slots
_DRANGE, _CODE, _POS, _OVERRUN = 0, 1, 2, 3


class TruncatedStreamError(ValueError):
    """The decoder needed more bytes than the stream holds."""


# ---------------------------------------------------------------------------
# models


@nb.njit(cache=True)
def new_model(alphabet):
    m = np.ones(alphabet + 1, dtype=np.int64)
    m[alphabet] = alphabet
    return m


@nb.njit(cache=True, inline="always")
def _update(model, s):
    a = model.shape[0] - 1
    model[s] += INCREMENT
    model[a] += INCREMENT
    if model[a] > RESCALE_LIMIT:
        total = 0
        for i in range(a):
            c = model[i] >> 1
            if c < 1:
                c = 1
            model[i] = c
            total += c
        model[a] = total


# ---------------------------------------------------------------------------
# encoder


@nb.njit(cache=True)
def encoder_state():
    st = np.zeros(5, dtype=np.int64)
    st[_RANGE] = RANGE_INIT
    st[_CACHE_SIZE] = 1
    return st


@nb.njit(cache=True, inline="always")
def _put(st, buf, byte):
    n = st[_NOUT]
    if n >= buf.shape[0]:
        nbuf = np.empty(max(64, buf.shape[0] * 2), dtype=np.uint8)
        nbuf[:n] = buf[:n]
        buf = nbuf
    buf[n] = byte
    st[_NOUT] = n + 1
    return buf


@nb.njit(cache=True)
def _shift_low(st, buf):
    low = st[_LOW]
    if (low & 0xFFFFFFFF) < 0xFF000000 or (low >> 32) != 0:
        carry = low >> 32
        temp = st[_CACHE]
        while True:
            buf = _put(st, buf, (temp + carry) & 0xFF)
            temp = 0xFF
            st[_CACHE_SIZE] -= 1
            if st[_CACHE_SIZE] == 0:
                break
        st[_CACHE] = (low >> 24) & 0xFF
    st[_CACHE_SIZE] += 1
    st[_LOW] = (low << 8) & 0xFFFFFFFF
    return buf


@nb.njit(cache=True)
def encode_range(st, buf, cum, freq, total):
    r = st[_RANGE] // total
    st[_LOW] += r * cum
    st[_RANGE] = r * freq
    while st[_RANGE] < TOP:
        st[_RANGE] <<= 8
        buf = _shift_low(st, buf)
    return buf


@nb.njit(cache=True)
def encode_symbol(st, buf, model, s):
    cum = 0
    for i in range(s):
        cum += model[i]
    a = model.shape[0] - 1
    buf = encode_range(st, buf, cum, model[s], model[a])
    _update(model, s)
    return buf


@nb.njit(cache=True)
def encode_varint(st, buf, model, value):
    """Little-endian base-128 varint through a 256-symbol byte model."""
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf = encode_symbol(st, buf, model, byte | 0x80)
        else:
            buf = encode_symbol(st, buf, model, byte)
            break
    return buf


@nb.njit(cache=True)
def finish(st, buf):
    for _ in range(FLUSH_BYTES):
        buf = _shift_low(st, buf)
    return buf


@nb.njit(cache=True)
def encode_all(symbols, alphabet):
    st = encoder_state()
    buf = np.empty(64 + symbols.shape[0] // 2, dtype=np.uint8)
    model = new_model(alphabet)
    for i in range(symbols.shape[0]):
        buf = encode_symbol(st, buf, model, symbols[i])
    buf = finish(st, buf)
    return buf[: st[_NOUT]].copy()


@nb.njit(cache=True)
def encode_all_ctx(symbols, contexts, alphabet, n_ctx):
    """Like :func:`encode_all` with one adaptive model per context id."""
    st = encoder_state()
    buf = np.empty(64 + symbols.shape[0] // 2, dtype=np.uint8)
    models = np.empty((n_ctx, alphabet + 1), dtype=np.int64)
    for c in range(n_ctx):
        models[c] = new_model(alphabet)
    for i in range(symbols.shape[0]):
        buf = encode_symbol(st, buf, models[contexts[i]], symbols[i])
    buf = finish(st, buf)
    return buf[: st[_NOUT]].copy()


# ---------------------------------------------------------------------------
# decoder


@nb.njit(cache=True, inline="always")
def _get(st, data):
    p = st[_POS]
    st[_POS] = p + 1
    if p < data.shape[0]:
        return np.int64(data[p])
    st[_OVERRUN] = 1
    return np.int64(0)


@nb.njit(cache=True)
def decoder_state(data):
    st = np.zeros(4, dtype=np.int64)
    st[_DRANGE] = RANGE_INIT
    code = np.int64(0)
    for _ in range(FLUSH_BYTES):
        code = ((code << 8) | _get(st, data)) & 0xFFFFFFFF
    st[_CODE] = code
    return st


@nb.njit(cache=True)
def decode_symbol(st, data, model):
    a = model.shape[0] - 1
    total = model[a]
    r = st[_DRANGE] // total
    v = st[_CODE] // r
    if v >= total:
        v = total - 1
        st[_OVERRUN] = 1
    s = 0
    cum = 0
    while cum + model[s] <= v:
        cum += model[s]
        s += 1
    st[_CODE] -= r * cum
    st[_DRANGE] = r * model[s]
    while st[_DRANGE] < TOP:
        st[_CODE] = ((st[_CODE] << 8) | _get(st, data)) & 0xFFFFFFFF
        st[_DRANGE] <<= 8
    _update(model, s)
    return s


@nb.njit(cache=True)
def decode_varint(st, data, model):
    value = np.int64(0)
    shift = 0
    while True:
        byte = decode_symbol(st, data, model)
        value |= np.int64(byte & 0x7F) << shift
        shift += 7
        if byte < 0x80 or shift > 63:
            break
    return value


@nb.njit(cache=True)
def decode_all(data, alphabet, n):
    st = decoder_state(data)
    model = new_model(alphabet)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        out[i] = decode_symbol(st, data, model)
    return out, st[_OVERRUN] != 0


def zigzag(v: int) -> int:
    return (v << 1) if v >= 0 else ((-v << 1) - 1)


def unzigzag(u: int) -> int:
    return (u >> 1) if not u & 1 else -((u + 1) >> 1)


# ---------------------------------------------------------------------------
# Python-facing objects


class FrequencyModel:
    """Adaptive symbol counts for an alphabet of ``alphabet`` symbols."""

    def __init__(self, alphabet: int):
        if not 1 <= alphabet <= 1 << 12:
            raise ValueError(f"alphabet size out of range: {alphabet}")
        self.alphabet = alphabet
        self.counts = new_model(alphabet)

    @property
    def total(self) -> int:
        return int(self.counts[self.alphabet])

    def frequencies(self) -> np.ndarray:
        return self.counts[: self.alphabet].copy()


class RangeEncoder:
    """Incremental encoder writing to an internal byte buffer."""

    def __init__(self):
        self._st = encoder_state()
        self._buf = np.empty(256, dtype=np.uint8)
        self._done = False

    def encode_symbol(self, model: FrequencyModel, s: int) -> None:
        if not 0 <= s < model.alphabet:
            raise ValueError(f"symbol {s} outside alphabet of size {model.alphabet}")
        self._buf = encode_symbol(self._st, self._buf, model.counts, s)

    def encode_varint(self, model: FrequencyModel, value: int) -> None:
        if value < 0:
            raise ValueError("varints are unsigned")
        if model.alphabet != 256:
            raise ValueError("varints need a 256-symbol byte model")
        self._buf = encode_varint(self._st, self._buf, model.counts, value)

    def finish(self) -> bytes:
        if not self._done:
            self._buf = finish(self._st, self._buf)
            self._done = True
        return self._buf[: self._st[_NOUT]].tobytes()


class RangeDecoder:
    """Decoder positioned at the start of ``data`` (the ``attach`` operation)."""

    def __init__(self, data: bytes):
        self._data = np.frombuffer(bytes(data), dtype=np.uint8)
        self._st = decoder_state(self._data)

    def decode_symbol(self, model: FrequencyModel) -> int:
        s = decode_symbol(self._st, self._data, model.counts)
        self._check()
        return int(s)

    def decode_varint(self, model: FrequencyModel) -> int:
        v = decode_varint(self._st, self._data, model.counts)
        self._check()
        return int(v)

    @property
    def consumed(self) -> int:
        return int(self._st[_POS])

    def _check(self) -> None:
        if self._st[_OVERRUN]:
            raise TruncatedStreamError("range decoder ran past the end of its stream")


def attach(data: bytes) -> RangeDecoder:
    return RangeDecoder(data)


def encode_symbols(symbols, alphabet: int) -> bytes:
    arr = np.asarray(symbols, dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= alphabet):
        raise ValueError("symbol outside alphabet")
    return encode_all(arr, alphabet).tobytes()


def encode_symbols_ctx(symbols, contexts, alphabet: int, n_contexts: int) -> bytes:
    arr = np.asarray(symbols, dtype=np.int64)
    ctx = np.asarray(contexts, dtype=np.int64)
    if arr.shape != ctx.shape:
        raise ValueError("one context per symbol")
    if arr.size and (arr.min() < 0 or arr.max() >= alphabet):
        raise ValueError("symbol outside alphabet")
    if ctx.size and (ctx.min() < 0 or ctx.max() >= n_contexts):
        raise ValueError("context outside range")
    return encode_all_ctx(arr, ctx, alphabet, n_contexts).tobytes()


def decode_symbols(data: bytes, alphabet: int, n: int) -> np.ndarray:
    out, overrun = decode_all(np.frombuffer(bytes(data), dtype=np.uint8), alphabet, n)
    if overrun:
        raise TruncatedStreamError("range decoder ran past the end of its stream")
    return out
