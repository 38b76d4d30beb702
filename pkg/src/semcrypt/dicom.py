"""Minimal DICOM Part-10 reader/writer.

Supported: explicit and implicit VR little endian, native (uncompressed)
single-frame grayscale pixel data. Sequences with undefined length are
walked structurally so the parser can find their end, but their content is
kept as opaque bytes. Anything else raises a ``DicomError`` subclass; the
parser never reads past a declared length.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from semcrypt.errors import (
    MalformedDataset,
    MissingMagic,
    MissingRequiredTag,
    PixelDataSizeMismatch,
    TruncatedElement,
    UnsupportedTransferSyntax,
)
from semcrypt.image import ImageBuffer, Window

PREAMBLE_LEN = 128
MAGIC = b"DICM"

EXPLICIT_VR_LE_UID = "1.2.840.10008.1.2.1"
IMPLICIT_VR_LE_UID = "1.2.840.10008.1.2"
SECONDARY_CAPTURE_UID = "1.2.840.10008.5.1.4.1.1.7"
IMPLEMENTATION_UID = "2.25.302713061532912271006396232441958339425"

UNDEFINED_LENGTH = 0xFFFFFFFF
MAX_SEQUENCE_DEPTH = 16

# VRs whose explicit encoding uses 2 reserved bytes and a 32-bit length.
LONG_VRS = frozenset({"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"})

TRANSFER_SYNTAX = (0x0002, 0x0010)
SAMPLES_PER_PIXEL = (0x0028, 0x0002)
PHOTOMETRIC = (0x0028, 0x0004)
ROWS = (0x0028, 0x0010)
COLUMNS = (0x0028, 0x0011)
BITS_ALLOCATED = (0x0028, 0x0100)
BITS_STORED = (0x0028, 0x0101)
PIXEL_REPRESENTATION = (0x0028, 0x0103)
WINDOW_CENTER = (0x0028, 0x1050)
WINDOW_WIDTH = (0x0028, 0x1051)
PATIENT_ID = (0x0010, 0x0020)
PIXEL_DATA = (0x7FE0, 0x0010)

ITEM = (0xFFFE, 0xE000)
ITEM_DELIMITER = (0xFFFE, 0xE00D)
SEQUENCE_DELIMITER = (0xFFFE, 0xE0DD)

# VRs assumed for implicit-VR data; everything else is read as UN.
IMPLICIT_VRS = {
    (0x0008, 0x0016): "UI", (0x0008, 0x0018): "UI", (0x0008, 0x0060): "CS",
    PATIENT_ID: "LO", SAMPLES_PER_PIXEL: "US", PHOTOMETRIC: "CS",
    ROWS: "US", COLUMNS: "US", BITS_ALLOCATED: "US", BITS_STORED: "US",
    (0x0028, 0x0102): "US", PIXEL_REPRESENTATION: "US",
    WINDOW_CENTER: "DS", WINDOW_WIDTH: "DS", PIXEL_DATA: "OW",
}


class TransferSyntax(enum.Enum):
    EXPLICIT_VR_LITTLE_ENDIAN = EXPLICIT_VR_LE_UID
    IMPLICIT_VR_LITTLE_ENDIAN = IMPLICIT_VR_LE_UID


@dataclass(frozen=True)
class DicomElement:
    group: int
    element: int
    vr: str
    value: bytes
    undefined_length: bool = False

    @property
    def tag(self) -> tuple[int, int]:
        return (self.group, self.element)

    def __repr__(self):
        return f"DicomElement(({self.group:04X},{self.element:04X}) {self.vr}, {len(self.value)} bytes)"


@dataclass
class DicomDataset:
    elements: list[DicomElement] = field(default_factory=list)
    transfer_syntax: TransferSyntax = TransferSyntax.EXPLICIT_VR_LITTLE_ENDIAN

    def __post_init__(self):
        self._index = {e.tag: e for e in self.elements}

    def __contains__(self, tag) -> bool:
        return tag in self._index

    def get(self, tag) -> DicomElement | None:
        return self._index.get(tag)

    def get_str(self, tag) -> str | None:
        elem = self._index.get(tag)
        if elem is None:
            return None
        return elem.value.decode("ascii", errors="replace").rstrip("\x00 ")

    def get_int(self, tag) -> int | None:
        elem = self._index.get(tag)
        if elem is None:
            return None
        if elem.vr in ("US", "UN", "OW") and len(elem.value) >= 2:
            return struct.unpack_from("<H", elem.value)[0]
        if elem.vr == "UL" and len(elem.value) >= 4:
            return struct.unpack_from("<I", elem.value)[0]
        if elem.vr == "SS" and len(elem.value) >= 2:
            return struct.unpack_from("<h", elem.value)[0]
        if elem.vr == "IS":
            try:
                return int(self.get_str(tag).split("\\")[0])
            except ValueError:
                return None
        return None

    def get_float(self, tag) -> float | None:
        text = self.get_str(tag)
        if not text:
            return None
        try:
            return float(text.split("\\")[0])
        except ValueError:
            return None


class _Reader:
    def __init__(self, buf: bytes, pos: int, explicit: bool):
        self.buf = buf
        self.pos = pos
        self.explicit = explicit

    def need(self, n: int, what: str) -> None:
        if self.pos + n > len(self.buf):
            raise TruncatedElement(f"{what} at offset {self.pos} needs {n} bytes, "
                                   f"{len(self.buf) - self.pos} left")

    def header(self, explicit: bool | None = None) -> tuple[int, int, str, int]:
        explicit = self.explicit if explicit is None else explicit
        self.need(8, "element header")
        group, elem = struct.unpack_from("<HH", self.buf, self.pos)
        if group == 0xFFFE:
            # items and delimiters carry no VR in either encoding
            (length,) = struct.unpack_from("<I", self.buf, self.pos + 4)
            self.pos += 8
            return group, elem, "", length
        if not explicit:
            (length,) = struct.unpack_from("<I", self.buf, self.pos + 4)
            self.pos += 8
            return group, elem, IMPLICIT_VRS.get((group, elem), "UN"), length
        vr_bytes = self.buf[self.pos + 4 : self.pos + 6]
        if not (vr_bytes.isalpha() and vr_bytes.isupper()):
            raise MalformedDataset(f"invalid VR {vr_bytes!r} at offset {self.pos + 4}")
        vr = vr_bytes.decode("ascii")
        if vr in LONG_VRS:
            self.need(12, "long element header")
            (length,) = struct.unpack_from("<I", self.buf, self.pos + 8)
            self.pos += 12
        else:
            (length,) = struct.unpack_from("<H", self.buf, self.pos + 6)
            self.pos += 8
        return group, elem, vr, length

    def skip_undefined(self, depth: int) -> None:
        """Advance past an undefined-length sequence, through its delimiter."""
        if depth > MAX_SEQUENCE_DEPTH:
            raise MalformedDataset("sequence nesting too deep")
        while True:
            group, elem, _, length = self.header()
            tag = (group, elem)
            if tag == SEQUENCE_DELIMITER:
                return
            if tag != ITEM:
                raise MalformedDataset(f"expected item tag, found ({group:04X},{elem:04X})")
            if length == UNDEFINED_LENGTH:
                self.skip_item(depth + 1)
            else:
                self.need(length, "item")
                self.pos += length

    def skip_item(self, depth: int) -> None:
        while True:
            group, elem, vr, length = self.header()
            if group == 0xFFFE:
                if (group, elem) == ITEM_DELIMITER:
                    return
                raise MalformedDataset("unexpected item tag inside item")
            if length == UNDEFINED_LENGTH:
                if vr not in ("SQ", "UN"):
                    raise MalformedDataset("undefined length on non-sequence element")
                self.skip_undefined(depth + 1)
            else:
                self.need(length, "element value")
                self.pos += length

    def element(self) -> DicomElement:
        start = self.pos
        group, elem, vr, length = self.header()
        if group == 0xFFFE:
            raise MalformedDataset(f"stray item/delimiter tag at offset {start}")
        if length == UNDEFINED_LENGTH:
            if (group, elem) == PIXEL_DATA:
                raise UnsupportedTransferSyntax("encapsulated (compressed) pixel data")
            if vr not in ("SQ", "UN"):
                raise MalformedDataset(f"undefined length on {vr} element")
            value_start = self.pos
            self.skip_undefined(0)
            return DicomElement(group, elem, "SQ" if vr == "UN" else vr,
                                self.buf[value_start : self.pos], undefined_length=True)
        if length % 2:
            raise MalformedDataset(f"odd value length {length} at offset {start}")
        self.need(length, f"value of ({group:04X},{elem:04X})")
        value = self.buf[self.pos : self.pos + length]
        self.pos += length
        return DicomElement(group, elem, vr, value)


def parse_dicom(data: bytes) -> DicomDataset:
    data = bytes(data)
    if len(data) < PREAMBLE_LEN + 4 or data[PREAMBLE_LEN : PREAMBLE_LEN + 4] != MAGIC:
        raise MissingMagic("no 'DICM' marker at offset 128")
    reader = _Reader(data, PREAMBLE_LEN + 4, explicit=True)
    elements: list[DicomElement] = []
    while reader.pos + 2 <= len(data) and struct.unpack_from("<H", data, reader.pos)[0] == 0x0002:
        elements.append(reader.element())

    meta = {e.tag: e for e in elements}
    if TRANSFER_SYNTAX not in meta:
        raise MalformedDataset("file meta group lacks TransferSyntaxUID")
    uid = meta[TRANSFER_SYNTAX].value.decode("ascii", errors="replace").rstrip("\x00 ")
    try:
        syntax = TransferSyntax(uid)
    except ValueError:
        raise UnsupportedTransferSyntax(uid) from None

    reader.explicit = syntax is TransferSyntax.EXPLICIT_VR_LITTLE_ENDIAN
    while reader.pos < len(data):
        elements.append(reader.element())

    for prev, cur in zip(elements, elements[1:]):
        if cur.tag <= prev.tag:
            raise MalformedDataset(
                f"tag ({cur.group:04X},{cur.element:04X}) out of ascending order")
    return DicomDataset(elements, syntax)


def _require_int(ds: DicomDataset, tag, name: str) -> int:
    value = ds.get_int(tag)
    if value is None:
        raise MissingRequiredTag(f"{name} ({tag[0]:04X},{tag[1]:04X}) missing or unreadable")
    return value


def extract_image(ds: DicomDataset) -> ImageBuffer:
    rows = _require_int(ds, ROWS, "Rows")
    cols = _require_int(ds, COLUMNS, "Columns")
    bits = _require_int(ds, BITS_ALLOCATED, "BitsAllocated")
    pixel = ds.get(PIXEL_DATA)
    if pixel is None:
        raise MissingRequiredTag("PixelData (7FE0,0010) missing")
    if bits not in (8, 16):
        raise MalformedDataset(f"BitsAllocated={bits} unsupported")
    if rows < 1 or cols < 1:
        raise MalformedDataset(f"bad image size {cols}x{rows}")
    if ds.get_int(SAMPLES_PER_PIXEL) not in (None, 1):
        raise MalformedDataset("only single-sample (grayscale) images are supported")
    if ds.get_int(PIXEL_REPRESENTATION) not in (None, 0):
        raise MalformedDataset("signed pixel data unsupported")

    expected = rows * cols * bits // 8
    # one trailing pad byte is legal when the raster has odd length
    if len(pixel.value) not in (expected, expected + (expected & 1)):
        raise PixelDataSizeMismatch(f"PixelData has {len(pixel.value)} bytes, expected {expected}")
    dtype = np.uint8 if bits == 8 else np.dtype("<u2")
    samples = np.frombuffer(pixel.value, dtype=dtype, count=rows * cols).astype(
        np.uint8 if bits == 8 else np.uint16)

    stored = ds.get_int(BITS_STORED) or bits
    stored = min(max(stored, 1), bits)
    max_value = (1 << stored) - 1
    if stored < bits:
        samples = samples & max_value
    if (ds.get_str(PHOTOMETRIC) or "MONOCHROME2") == "MONOCHROME1":
        samples = max_value - samples
    return ImageBuffer(samples.reshape(rows, cols), bits)


def window_from_dataset(ds: DicomDataset) -> Window | None:
    center, width = ds.get_float(WINDOW_CENTER), ds.get_float(WINDOW_WIDTH)
    if center is None or width is None or width <= 0:
        return None
    return Window(center, width)


# --- writer -----------------------------------------------------------------

def _pad(value: bytes, pad: bytes) -> bytes:
    return value + pad if len(value) % 2 else value


def _explicit_element(group: int, elem: int, vr: str, value: bytes) -> bytes:
    if vr in LONG_VRS:
        return struct.pack("<HH2sHI", group, elem, vr.encode(), 0, len(value)) + value
    return struct.pack("<HH2sH", group, elem, vr.encode(), len(value)) + value


def _uid(text: str) -> bytes:
    return _pad(text.encode("ascii"), b"\x00")


def _text(text: str) -> bytes:
    return _pad(text.encode("ascii", errors="replace"), b" ")


def synth_dicom(img: ImageBuffer, patient_id: str) -> bytes:
    """Deterministic explicit-VR-LE Part-10 file holding ``img``."""
    digest = hashlib.sha256(patient_id.encode() + img.raw_bytes()).digest()
    instance_uid = "2.25." + str(int.from_bytes(digest[:16], "big"))
    us = lambda v: struct.pack("<H", v)  # noqa: E731

    meta_body = b"".join([
        _explicit_element(0x0002, 0x0001, "OB", b"\x00\x01"),
        _explicit_element(0x0002, 0x0002, "UI", _uid(SECONDARY_CAPTURE_UID)),
        _explicit_element(0x0002, 0x0003, "UI", _uid(instance_uid)),
        _explicit_element(0x0002, 0x0010, "UI", _uid(EXPLICIT_VR_LE_UID)),
        _explicit_element(0x0002, 0x0012, "UI", _uid(IMPLEMENTATION_UID)),
    ])
    meta = _explicit_element(0x0002, 0x0000, "UL", struct.pack("<I", len(meta_body))) + meta_body

    pixels = img.raw_bytes()
    body = b"".join([
        _explicit_element(0x0008, 0x0016, "UI", _uid(SECONDARY_CAPTURE_UID)),
        _explicit_element(0x0008, 0x0018, "UI", _uid(instance_uid)),
        _explicit_element(0x0008, 0x0060, "CS", _text("OT")),
        _explicit_element(*PATIENT_ID, "LO", _text(patient_id)),
        _explicit_element(*SAMPLES_PER_PIXEL, "US", us(1)),
        _explicit_element(*PHOTOMETRIC, "CS", _text("MONOCHROME2")),
        _explicit_element(*ROWS, "US", us(img.height)),
        _explicit_element(*COLUMNS, "US", us(img.width)),
        _explicit_element(*BITS_ALLOCATED, "US", us(img.bit_depth)),
        _explicit_element(*BITS_STORED, "US", us(img.bit_depth)),
        _explicit_element(0x0028, 0x0102, "US", us(img.bit_depth - 1)),
        _explicit_element(*PIXEL_REPRESENTATION, "US", us(0)),
        _explicit_element(*PIXEL_DATA, "OB" if img.bit_depth == 8 else "OW", _pad(pixels, b"\x00")),
    ])
    return bytes(PREAMBLE_LEN) + MAGIC + meta + body
