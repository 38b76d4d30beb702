"""AES-CBC with PKCS#7, a SHA-256 key derivation, and the ``.semc`` container.

AES follows FIPS-197 using the usual 32-bit round tables, built at import
time from the S-box rather than pasted in. CBC chaining follows
NIST SP 800-38A. Only the MAC comparison is constant time.

``.semc`` layout (little-endian)::

    0  magic "SEMC"        4  version u8 = 1      5  cipher_id u8
    6  reserved u16 = 0    8  salt (16)          24  iv (16)
    40 plaintext_len u64  48  mac (32)           80  ciphertext

The MAC is HMAC-SHA-256 under ``mac_key`` over ``header[0:48] || ciphertext``
(encrypt-then-MAC) and is checked before anything is decrypted.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import os
import struct
from dataclasses import dataclass
from typing import Protocol

from semcrypt.errors import (
    BadMagic,
    BadPadding,
    EmptyPassphrase,
    EmptyPayload,
    InvalidKeyLength,
    MacMismatch,
)

BLOCK = 16
MAGIC = b"SEMC"
VERSION = 1
HEADER = struct.Struct("<4sBBH16s16sQ")
HEADER_LEN = 80
MAC_OFFSET = 48


class CipherId(enum.IntEnum):
    AES128_CBC = 1
    AES256_CBC = 2

    @property
    def key_len(self) -> int:
        return 16 if self is CipherId.AES128_CBC else 32


# --- AES tables -----------------------------------------------------------------

def _xtime(a: int) -> int:
    a <<= 1
    return a ^ 0x11B if a & 0x100 else a


def _gmul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a = _xtime(a)
        b >>= 1
    return out


def _build_sbox() -> tuple[list[int], list[int]]:
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if _gmul(a, b) == 1:
                inv[a] = b
                break
    sbox = []
    for a in range(256):
        x = inv[a]
        s = x
        for shift in range(1, 5):
            s ^= ((x << shift) | (x >> (8 - shift))) & 0xFF
        sbox.append(s ^ 0x63)
    inv_sbox = [0] * 256
    for i, s in enumerate(sbox):
        inv_sbox[s] = i
    return sbox, inv_sbox


SBOX, INV_SBOX = _build_sbox()


def _rot(word: int, n: int) -> int:
    return ((word >> (8 * n)) | (word << (32 - 8 * n))) & 0xFFFFFFFF


def _tables(box: list[int], coeffs: tuple[int, int, int, int]) -> list[list[int]]:
    base = []
    for x in range(256):
        s = box[x]
        c0, c1, c2, c3 = (_gmul(s, c) for c in coeffs)
        base.append((c0 << 24) | (c1 << 16) | (c2 << 8) | c3)
    return [base] + [[_rot(w, n) for w in base] for n in (1, 2, 3)]


TE = _tables(SBOX, (2, 1, 1, 3))
TD = _tables(INV_SBOX, (14, 9, 13, 11))
# InvMixColumns on a round-key word, for the equivalent inverse cipher
_IMC = _tables(list(range(256)), (14, 9, 13, 11))

RCON = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36]


def _sub_word(w: int) -> int:
    return (SBOX[w >> 24] << 24) | (SBOX[(w >> 16) & 0xFF] << 16) | (SBOX[(w >> 8) & 0xFF] << 8) | SBOX[w & 0xFF]


class AES:
    """One AES key schedule (128- or 256-bit) with single-block operations."""

    def __init__(self, key: bytes):
        key = bytes(key)
        if len(key) not in (16, 32):
            raise InvalidKeyLength(f"AES key must be 16 or 32 bytes, got {len(key)}")
        nk = len(key) // 4
        self.rounds = nk + 6
        w = list(struct.unpack(f">{nk}I", key))
        for i in range(nk, 4 * (self.rounds + 1)):
            t = w[i - 1]
            if i % nk == 0:
                t = _sub_word(((t << 8) | (t >> 24)) & 0xFFFFFFFF) ^ (RCON[i // nk - 1] << 24)
            elif nk > 6 and i % nk == 4:
                t = _sub_word(t)
            w.append(w[i - nk] ^ t)
        self._enc = w
        dec = []
        for r in range(self.rounds, -1, -1):
            words = w[4 * r : 4 * r + 4]
            if 0 < r < self.rounds:
                words = [_IMC[0][x >> 24] ^ _IMC[1][(x >> 16) & 0xFF] ^ _IMC[2][(x >> 8) & 0xFF]
                         ^ _IMC[3][x & 0xFF] for x in words]
            dec.extend(words)
        self._dec = dec

    def encrypt_words(self, s0: int, s1: int, s2: int, s3: int) -> tuple[int, int, int, int]:
        k = self._enc
        t0, t1, t2, t3 = TE
        s0 ^= k[0]
        s1 ^= k[1]
        s2 ^= k[2]
        s3 ^= k[3]
        i = 4
        for _ in range(self.rounds - 1):
            s0, s1, s2, s3 = (
                t0[s0 >> 24] ^ t1[(s1 >> 16) & 0xFF] ^ t2[(s2 >> 8) & 0xFF] ^ t3[s3 & 0xFF] ^ k[i],
                t0[s1 >> 24] ^ t1[(s2 >> 16) & 0xFF] ^ t2[(s3 >> 8) & 0xFF] ^ t3[s0 & 0xFF] ^ k[i + 1],
                t0[s2 >> 24] ^ t1[(s3 >> 16) & 0xFF] ^ t2[(s0 >> 8) & 0xFF] ^ t3[s1 & 0xFF] ^ k[i + 2],
                t0[s3 >> 24] ^ t1[(s0 >> 16) & 0xFF] ^ t2[(s1 >> 8) & 0xFF] ^ t3[s2 & 0xFF] ^ k[i + 3],
            )
            i += 4
        sb = SBOX
        return (
            ((sb[s0 >> 24] << 24) | (sb[(s1 >> 16) & 0xFF] << 16) | (sb[(s2 >> 8) & 0xFF] << 8) | sb[s3 & 0xFF]) ^ k[i],
            ((sb[s1 >> 24] << 24) | (sb[(s2 >> 16) & 0xFF] << 16) | (sb[(s3 >> 8) & 0xFF] << 8) | sb[s0 & 0xFF]) ^ k[i + 1],
            ((sb[s2 >> 24] << 24) | (sb[(s3 >> 16) & 0xFF] << 16) | (sb[(s0 >> 8) & 0xFF] << 8) | sb[s1 & 0xFF]) ^ k[i + 2],
            ((sb[s3 >> 24] << 24) | (sb[(s0 >> 16) & 0xFF] << 16) | (sb[(s1 >> 8) & 0xFF] << 8) | sb[s2 & 0xFF]) ^ k[i + 3],
        )

    def decrypt_words(self, s0: int, s1: int, s2: int, s3: int) -> tuple[int, int, int, int]:
        k = self._dec
        t0, t1, t2, t3 = TD
        s0 ^= k[0]
        s1 ^= k[1]
        s2 ^= k[2]
        s3 ^= k[3]
        i = 4
        for _ in range(self.rounds - 1):
            s0, s1, s2, s3 = (
                t0[s0 >> 24] ^ t1[(s3 >> 16) & 0xFF] ^ t2[(s2 >> 8) & 0xFF] ^ t3[s1 & 0xFF] ^ k[i],
                t0[s1 >> 24] ^ t1[(s0 >> 16) & 0xFF] ^ t2[(s3 >> 8) & 0xFF] ^ t3[s2 & 0xFF] ^ k[i + 1],
                t0[s2 >> 24] ^ t1[(s1 >> 16) & 0xFF] ^ t2[(s0 >> 8) & 0xFF] ^ t3[s3 & 0xFF] ^ k[i + 2],
                t0[s3 >> 24] ^ t1[(s2 >> 16) & 0xFF] ^ t2[(s1 >> 8) & 0xFF] ^ t3[s0 & 0xFF] ^ k[i + 3],
            )
            i += 4
        ib = INV_SBOX
        return (
            ((ib[s0 >> 24] << 24) | (ib[(s3 >> 16) & 0xFF] << 16) | (ib[(s2 >> 8) & 0xFF] << 8) | ib[s1 & 0xFF]) ^ k[i],
            ((ib[s1 >> 24] << 24) | (ib[(s0 >> 16) & 0xFF] << 16) | (ib[(s3 >> 8) & 0xFF] << 8) | ib[s2 & 0xFF]) ^ k[i + 1],
            ((ib[s2 >> 24] << 24) | (ib[(s1 >> 16) & 0xFF] << 16) | (ib[(s0 >> 8) & 0xFF] << 8) | ib[s3 & 0xFF]) ^ k[i + 2],
            ((ib[s3 >> 24] << 24) | (ib[(s2 >> 16) & 0xFF] << 16) | (ib[(s1 >> 8) & 0xFF] << 8) | ib[s0 & 0xFF]) ^ k[i + 3],
        )

    def encrypt_block(self, block: bytes) -> bytes:
        return struct.pack(">4I", *self.encrypt_words(*struct.unpack(">4I", block)))

    def decrypt_block(self, block: bytes) -> bytes:
        return struct.pack(">4I", *self.decrypt_words(*struct.unpack(">4I", block)))


# --- CBC + padding ----------------------------------------------------------------

def pkcs7_pad(data: bytes) -> bytes:
    n = BLOCK - len(data) % BLOCK
    return data + bytes([n]) * n


def pkcs7_unpad(data: bytes) -> bytes:
    if not data or len(data) % BLOCK:
        raise BadPadding("padded data is not a positive multiple of the block size")
    n = data[-1]
    if not 1 <= n <= BLOCK or data[-n:] != bytes([n]) * n:
        raise BadPadding("invalid PKCS#7 padding")
    return data[:-n]


def _check_iv(iv: bytes) -> None:
    if len(iv) != BLOCK:
        raise InvalidKeyLength(f"IV must be 16 bytes, got {len(iv)}")


def cbc_encrypt_raw(data: bytes, key: bytes, iv: bytes) -> bytes:
    """CBC over block-aligned data with no padding."""
    _check_iv(iv)
    if len(data) % BLOCK:
        raise ValueError("CBC input must be block aligned")
    aes = AES(key)
    enc = aes.encrypt_words
    n = len(data) // 4
    words = struct.unpack(f">{n}I", data)
    out = [0] * n
    c0, c1, c2, c3 = struct.unpack(">4I", iv)
    for i in range(0, n, 4):
        c0, c1, c2, c3 = enc(words[i] ^ c0, words[i + 1] ^ c1, words[i + 2] ^ c2, words[i + 3] ^ c3)
        out[i], out[i + 1], out[i + 2], out[i + 3] = c0, c1, c2, c3
    return struct.pack(f">{n}I", *out)


def cbc_decrypt_raw(data: bytes, key: bytes, iv: bytes) -> bytes:
    _check_iv(iv)
    if len(data) % BLOCK:
        raise BadPadding("ciphertext is not block aligned")
    aes = AES(key)
    dec = aes.decrypt_words
    n = len(data) // 4
    words = struct.unpack(f">{n}I", data)
    out = [0] * n
    p0, p1, p2, p3 = struct.unpack(">4I", iv)
    for i in range(0, n, 4):
        d0, d1, d2, d3 = dec(words[i], words[i + 1], words[i + 2], words[i + 3])
        out[i], out[i + 1], out[i + 2], out[i + 3] = d0 ^ p0, d1 ^ p1, d2 ^ p2, d3 ^ p3
        p0, p1, p2, p3 = words[i], words[i + 1], words[i + 2], words[i + 3]
    return struct.pack(f">{n}I", *out)


def aes_cbc_encrypt(plaintext: bytes, enc_key: bytes, iv: bytes) -> bytes:
    return cbc_encrypt_raw(pkcs7_pad(bytes(plaintext)), enc_key, iv)


def aes_cbc_decrypt(ciphertext: bytes, enc_key: bytes, iv: bytes) -> bytes:
    if not ciphertext:
        raise BadPadding("empty ciphertext")
    return pkcs7_unpad(cbc_decrypt_raw(bytes(ciphertext), enc_key, iv))


# --- keys + container ---------------------------------------------------------------

@dataclass(frozen=True)
class KeyMaterial:
    enc_key: bytes
    mac_key: bytes
    salt: bytes


def _passphrase_bytes(passphrase: bytes | str) -> bytes:
    data = passphrase.encode("utf-8") if isinstance(passphrase, str) else bytes(passphrase)
    if not data:
        raise EmptyPassphrase("passphrase must not be empty")
    return data


def derive_keys(passphrase: bytes | str, salt: bytes, cipher_id: CipherId = CipherId.AES256_CBC) -> KeyMaterial:
    """Single-round SHA-256 derivation: k = SHA-256(passphrase || salt)."""
    pw = _passphrase_bytes(passphrase)
    if len(salt) != 16:
        raise ValueError("salt must be 16 bytes")
    cipher_id = CipherId(cipher_id)
    k = hashlib.sha256(pw + salt).digest()
    return KeyMaterial(k[: cipher_id.key_len], hashlib.sha256(k + b"\x01").digest(), bytes(salt))


class ByteSource(Protocol):
    def random_bytes(self, n: int) -> bytes: ...


class SystemRandom:
    """Operating-system entropy; the production source for salts and IVs."""

    def random_bytes(self, n: int) -> bytes:
        return os.urandom(n)


@dataclass(frozen=True)
class EncryptedContainer:
    cipher_id: CipherId
    salt: bytes
    iv: bytes
    plaintext_len: int
    mac: bytes
    ciphertext: bytes

    def header(self) -> bytes:
        return HEADER.pack(MAGIC, VERSION, int(self.cipher_id), 0, self.salt, self.iv, self.plaintext_len)

    def to_bytes(self) -> bytes:
        return self.header() + self.mac + self.ciphertext


def container_size(payload_len: int) -> int:
    return HEADER_LEN + BLOCK * (payload_len // BLOCK + 1)


def _mac(mac_key: bytes, header: bytes, ciphertext: bytes) -> bytes:
    return hmac.new(mac_key, header + ciphertext, hashlib.sha256).digest()


def encrypt_container(payload: bytes, passphrase: bytes | str,
                      cipher_id: CipherId = CipherId.AES256_CBC,
                      rng: ByteSource | None = None) -> bytes:
    payload = bytes(payload)
    if not payload:
        raise EmptyPayload("nothing to encrypt")
    rng = rng or SystemRandom()
    salt = rng.random_bytes(16)
    iv = rng.random_bytes(16)
    keys = derive_keys(passphrase, salt, cipher_id)
    ct = aes_cbc_encrypt(payload, keys.enc_key, iv)
    box = EncryptedContainer(CipherId(cipher_id), salt, iv, len(payload), b"", ct)
    head = box.header()
    return head + _mac(keys.mac_key, head, ct) + ct


def parse_container(data: bytes) -> EncryptedContainer:
    """Split a ``.semc`` file into fields; checks framing only, not the MAC."""
    data = bytes(data)
    if len(data) < HEADER_LEN or data[:4] != MAGIC:
        raise BadMagic("not a SEMC container")
    magic, version, cipher_id, _reserved, salt, iv, plen = HEADER.unpack_from(data)
    if version != VERSION:
        raise BadMagic(f"unsupported SEMC version {version}")
    try:
        cid = CipherId(cipher_id)
    except ValueError:
        raise BadMagic(f"unknown cipher id {cipher_id}") from None
    return EncryptedContainer(cid, salt, iv, plen, data[MAC_OFFSET:HEADER_LEN], data[HEADER_LEN:])


def decrypt_container(data: bytes, passphrase: bytes | str) -> bytes:
    data = bytes(data)
    box = parse_container(data)
    keys = derive_keys(passphrase, box.salt, box.cipher_id)
    expected = _mac(keys.mac_key, data[:MAC_OFFSET], box.ciphertext)
    if not hmac.compare_digest(expected, box.mac):
        raise MacMismatch("authentication failed: wrong passphrase or tampered container")
    plain = aes_cbc_decrypt(box.ciphertext, keys.enc_key, box.iv)
    if len(plain) != box.plaintext_len:
        raise BadPadding("recovered length disagrees with the header")
    return plain
