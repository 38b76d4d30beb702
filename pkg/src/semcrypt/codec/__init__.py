from semcrypt.codec.j2l import Codestream, decode, encode, parse_codestream
from semcrypt.codec.wavelet import Mode, dequantize, dwt_forward, dwt_inverse, quantize

__all__ = [
    "Codestream", "Mode", "decode", "dequantize", "dwt_forward", "dwt_inverse",
    "encode", "parse_codestream", "quantize",
]
