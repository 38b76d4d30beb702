"""Byte-oriented adaptive order-0 range coder.

32-bit range with byte-wise (x2^8) renormalisation and carry propagation
through a cached byte, as in the LZMA range coder. Two bytes are trimmed per
block: the always-zero lead byte is not written, and the flush picks the
value in the final interval with the most trailing zero bytes and drops
them. The decoder reads zeros past the end of the block to compensate. The model is a 256-symbol
frequency table (starting with extra weight on small symbols) kept under
a 12-bit total: every coded symbol gains
``INCREMENT`` and all counts are halved (rounding up) once the total passes
``MAX_TOTAL``. A Fenwick tree gives O(log n) cumulative lookups.
"""

from __future__ import annotations

from itertools import accumulate

from semcrypt.errors import CorruptPayload

NSYM = 256
MAX_TOTAL = 1 << 12
INCREMENT = 24
TOP = 1 << 24
# token bytes are overwhelmingly small, so the model starts biased towards them
PRIOR_SYMBOLS = 32
PRIOR_WEIGHT = 8
MASK32 = 0xFFFFFFFF
FLUSH_TRIM = 4
# a well-formed block is never read this far past its end
MAX_OVERRUN = 8


_SPANS = [(i, i - (i & -i)) for i in range(1, NSYM + 1)]


class AdaptiveModel:
    __slots__ = ("freq", "tree", "total")

    def __init__(self):
        self.freq = [PRIOR_WEIGHT] * PRIOR_SYMBOLS + [1] * (NSYM - PRIOR_SYMBOLS)
        self._rebuild()

    def _rebuild(self) -> None:
        # node i of a Fenwick tree covers the prefix-sum difference over (i - lowbit(i), i]
        prefix = [0, *accumulate(self.freq)]
        self.tree = [0] + [prefix[i] - prefix[j] for i, j in _SPANS]
        self.total = prefix[-1]

    def cumulative(self, sym: int) -> int:
        """Sum of frequencies of symbols below ``sym``."""
        tree = self.tree
        total = 0
        i = sym
        while i > 0:
            total += tree[i]
            i &= i - 1
        return total

    def find(self, target: int) -> tuple[int, int]:
        """Symbol whose cumulative interval contains ``target``; returns (sym, cum)."""
        tree = self.tree
        pos = 0
        cum = 0
        step = NSYM
        while step:
            nxt = pos + step
            if nxt <= NSYM and cum + tree[nxt] <= target:
                pos = nxt
                cum += tree[nxt]
            step >>= 1
        return pos, cum

    def update(self, sym: int) -> None:
        self.freq[sym] += INCREMENT
        self.total += INCREMENT
        if self.total > MAX_TOTAL:
            self.freq = [(f + 1) >> 1 for f in self.freq]
            self._rebuild()
            return
        tree = self.tree
        i = sym + 1
        while i <= NSYM:
            tree[i] += INCREMENT
            i += i & -i


def encode_bytes(data: bytes) -> bytes:
    model = AdaptiveModel()
    out = bytearray()
    low = 0
    rng = MASK32
    cache = 0
    cache_size = 1

    freq, tree, total = model.freq, model.tree, model.total
    for sym in data:
        cum = 0
        i = sym
        while i:
            cum += tree[i]
            i &= i - 1
        r = rng // total
        low += r * cum
        rng = r * freq[sym]
        while rng < TOP:
            rng <<= 8
            # shift_low
            if low < 0xFF000000 or low > MASK32:
                carry = low >> 32
                temp = cache
                while cache_size:
                    out.append((temp + carry) & 0xFF)
                    temp = 0xFF
                    cache_size -= 1
                cache = (low >> 24) & 0xFF
            cache_size += 1
            low = (low & 0x00FFFFFF) << 8
        # model update, inlined
        freq[sym] += INCREMENT
        total += INCREMENT
        if total > MAX_TOTAL:
            model.freq = [(f + 1) >> 1 for f in freq]
            model._rebuild()
            freq, tree, total = model.freq, model.tree, model.total
        else:
            i = sym + 1
            while i <= NSYM:
                tree[i] += INCREMENT
                i += i & -i

    # any value in [low, low + rng) identifies the stream; rng >= 2^24 so one
    # with its low 24 bits clear always exists
    low = (low + 0xFFFFFF) & ~0xFFFFFF
    for _ in range(5):
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = cache
            while cache_size:
                out.append((temp + carry) & 0xFF)
                temp = 0xFF
                cache_size -= 1
            cache = (low >> 24) & 0xFF
        cache_size += 1
        low = (low & 0x00FFFFFF) << 8
    del out[0]
    # only the low bytes written by the flush may be dropped
    keep = len(out)
    while keep > 0 and len(out) - keep < FLUSH_TRIM and out[keep - 1] == 0:
        keep -= 1
    return bytes(out[:keep])


class Decoder:
    """Pull-style decoder; ``symbol()`` yields one byte-symbol at a time."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 4
        self.code = int.from_bytes(data[:4].ljust(4, b"\x00"), "big")
        self.range = MASK32
        self.model = AdaptiveModel()

    def symbol(self) -> int:
        model = self.model
        total = model.total
        r = self.range // total
        value = self.code // r
        if value >= total:
            raise CorruptPayload("range decoder desynchronised")
        sym, cum = model.find(value)
        code = self.code - r * cum
        rng = r * model.freq[sym]
        data = self.data
        while rng < TOP:
            if self.pos >= len(data) + MAX_OVERRUN:
                raise CorruptPayload("range-coded block truncated")
            byte = data[self.pos] if self.pos < len(data) else 0
            code = ((code << 8) | byte) & MASK32
            rng <<= 8
            self.pos += 1
        self.code = code
        self.range = rng
        model.update(sym)
        return sym

    def finished_cleanly(self) -> bool:
        """True when every stored byte has been consumed (none left over)."""
        return self.pos >= len(self.data)
