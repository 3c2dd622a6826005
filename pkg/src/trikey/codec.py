"""Variable-length integer primitives shared by the occurrence and posting codecs.

Little-endian base-128 varints: the low 7 bits of each byte carry payload,
the high bit marks continuation. Signed values go through zigzag first so
small magnitudes of either sign stay short.
"""

from __future__ import annotations


class TruncatedData(ValueError):
    """A varint or encoded block ended before its last byte."""


def write_uvarint(out: bytearray, value: int) -> None:
    if value < 0:
        raise ValueError("uvarint cannot encode negative value %d" % value)
    while value >= 0x80:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    out.append(value)


def read_uvarint(data: bytes, pos: int) -> tuple[int, int]:
    """Decode one uvarint at ``pos``; return (value, next position)."""
    result = 0
    shift = 0
    n = len(data)
    while True:
        if pos >= n:
            raise TruncatedData("varint runs past end of data")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if byte < 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise TruncatedData("varint longer than 64 bits")


def zigzag(value: int) -> int:
    """Map a signed int to an unsigned one, interleaving signs: 0,1,-1,2,-2 -> 0,2,1,4,3."""
    return value << 1 if value >= 0 else ((-value) << 1) - 1


def unzigzag(value: int) -> int:
    return -((value + 1) >> 1) if value & 1 else value >> 1


def uvarint(value: int) -> bytes:
    out = bytearray()
    write_uvarint(out, value)
    return bytes(out)
