"""Exception hierarchy. Every error carries the CLI exit code it maps to."""

from __future__ import annotations


class SemcryptError(Exception):
    exit_code = 5


class UsageError(SemcryptError):
    exit_code = 1


class DataError(SemcryptError):
    """Malformed input data or a format violation."""

    exit_code = 2


class CryptoError(SemcryptError):
    exit_code = 3


class AccessDenied(SemcryptError):
    exit_code = 4


class InvariantBreach(SemcryptError):
    exit_code = 5


# dicom_ingest
class DicomError(DataError):
    pass


class MissingMagic(DicomError):
    pass


class TruncatedElement(DicomError):
    pass


class UnsupportedTransferSyntax(DicomError):
    pass


class MalformedDataset(DicomError):
    pass


class MissingRequiredTag(DicomError):
    pass


class PixelDataSizeMismatch(DicomError):
    pass


# image_core / leakage_audit
class DimensionMismatch(DataError):
    pass


class ImageTooSmall(DataError):
    pass


# codec
class CodecError(DataError):
    pass


class DimensionTooSmall(CodecError):
    pass


class CorruptPayload(CodecError):
    pass


class HeaderFieldOutOfRange(CodecError):
    pass


class BadMagic(DataError):
    """Wrong magic bytes or version in a container, codestream or model file."""


# crypto_core
class EmptyPassphrase(UsageError):
    pass


class EmptyPayload(DataError):
    pass


class InvalidKeyLength(CryptoError):
    pass


class BadPadding(CryptoError):
    pass


class MacMismatch(CryptoError):
    pass


# mask_transform
class BlockSizeMismatch(DataError):
    pass


# tiny_cnn
class ShapeMismatch(DataError):
    pass


class ShapeHeaderMismatch(DataError):
    pass


class SingleClassDataset(DataError):
    pass


# leakage_audit
class EmptyInput(DataError):
    pass


# vault
class NotFound(DataError):
    pass


class IdCollision(DataError):
    pass


class InvalidObjectId(UsageError):
    pass


class MalformedPolicy(DataError):
    pass
