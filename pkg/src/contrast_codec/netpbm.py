"""Self-contained netpbm (PBM/PGM/PPM) reading and writing.

Writers emit the binary variants (P4/P5/P6) with a fixed header layout so
identical data always produce identical bytes.  Readers additionally accept
the ASCII variants (P1/P2/P3).  Every parse error names the byte offset at
which the problem was found.

Note the PBM polarity convention: a stored 1 bit is "black" to most netpbm
viewers.  This module treats files purely as bit/sample containers; display
semantics live in the render layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FormatError

_WHITESPACE = b" \t\n\r\x0b\x0c"
MAX_MAXVAL = 65535


@dataclass
class PnmImage:
    """Raw parse result: kind is pbm/pgm/ppm; pixels dtype fits maxval."""

    kind: str
    pixels: np.ndarray  # (h, w) for pbm/pgm, (h, w, 3) for ppm
    maxval: int


class _Cursor:
    """Byte scanner that reports offsets in parse errors."""

    def __init__(self, data: bytes, name: str):
        self.data = data
        self.pos = 0
        self.name = name

    def error(self, message: str) -> FormatError:
        return FormatError(f"{self.name}: {message} at byte {self.pos}")

    def at_end(self) -> bool:
        return self.pos >= len(self.data)

    def skip_space_and_comments(self) -> None:
        data = self.data
        while self.pos < len(data):
            c = data[self.pos:self.pos + 1]
            if c in (b"#",):
                nl = data.find(b"\n", self.pos)
                self.pos = len(data) if nl < 0 else nl + 1
            elif c in _WHITESPACE:
                self.pos += 1
            else:
                return

    def read_magic(self) -> str:
        if self.data[:1] != b"P" or len(self.data) < 2:
            raise self.error("not a netpbm file (bad magic)")
        magic = self.data[:2].decode("ascii", "replace")
        if magic not in ("P1", "P2", "P3", "P4", "P5", "P6"):
            raise self.error(f"unsupported netpbm magic {magic!r}")
        self.pos = 2
        return magic

    def read_uint(self, what: str) -> int:
        self.skip_space_and_comments()
        if self.at_end():
            raise self.error(f"missing {what}")
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos:self.pos + 1].isdigit():
            self.pos += 1
        if self.pos == start:
            raise self.error(f"expected decimal {what}")
        return int(self.data[start:self.pos])

    def expect_single_space(self) -> None:
        # binary rasters start after exactly one whitespace byte
        if self.at_end() or self.data[self.pos:self.pos + 1] not in _WHITESPACE:
            raise self.error("expected whitespace before raster")
        self.pos += 1

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.data):
            self.pos = len(self.data)
            raise self.error(f"unexpected end of file in {what}")
        chunk = self.data[self.pos:self.pos + count]
        self.pos += count
        return chunk


def parse_pnm(data: bytes, name: str = "<bytes>") -> PnmImage:
    """Parse any supported netpbm flavor from bytes."""
    cur = _Cursor(data, name)
    magic = cur.read_magic()
    width = cur.read_uint("width")
    height = cur.read_uint("height")

    if magic in ("P1", "P4"):
        maxval = 1
    else:
        maxval = cur.read_uint("maxval")
        if not 1 <= maxval <= MAX_MAXVAL:
            raise cur.error(f"maxval {maxval} out of range 1..{MAX_MAXVAL}")

    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels

    if magic == "P4":
        cur.expect_single_space()
        row_bytes = (width + 7) // 8
        raster = cur.take(row_bytes * height, "raster")
        rows = np.frombuffer(raster, dtype=np.uint8).reshape(height, row_bytes)
        bits = np.unpackbits(rows, axis=1)[:, :width]
        return PnmImage("pbm", bits, 1)

    if magic in ("P5", "P6"):
        cur.expect_single_space()
        if maxval > 255:
            raster = cur.take(count * 2, "raster")
            samples = np.frombuffer(raster, dtype=">u2").astype(np.uint16)
        else:
            raster = cur.take(count, "raster")
            samples = np.frombuffer(raster, dtype=np.uint8)
        if samples.size and int(samples.max()) > maxval:
            raise cur.error(f"sample exceeds maxval {maxval}")
        shape = (height, width, 3) if channels == 3 else (height, width)
        kind = "ppm" if channels == 3 else "pgm"
        return PnmImage(kind, samples.reshape(shape).copy(), maxval)

    if magic == "P1":
        bits = np.empty(count, dtype=np.uint8)
        for i in range(count):
            cur.skip_space_and_comments()
            if cur.at_end():
                raise cur.error("unexpected end of file in raster")
            c = cur.data[cur.pos:cur.pos + 1]
            if c not in (b"0", b"1"):
                raise cur.error(f"expected bit digit, found {c!r}")
            bits[i] = c == b"1"
            cur.pos += 1
        return PnmImage("pbm", bits.reshape(height, width), 1)

    # P2 / P3
    samples = np.empty(count, dtype=np.uint16)
    for i in range(count):
        value = cur.read_uint("sample")
        if value > maxval:
            raise cur.error(f"sample {value} exceeds maxval {maxval}")
        samples[i] = value
    shape = (height, width, 3) if channels == 3 else (height, width)
    kind = "ppm" if channels == 3 else "pgm"
    return PnmImage(kind, samples.reshape(shape), maxval)


def read_pnm(path) -> PnmImage:
    with open(path, "rb") as fp:
        return parse_pnm(fp.read(), name=str(path))


def _header(magic: bytes, width: int, height: int, maxval: int | None,
            comments) -> bytes:
    lines = [magic]
    for comment in comments:
        text = str(comment)
        if "\n" in text or "\r" in text:
            raise DomainError("netpbm comments cannot span lines")
        lines.append(b"# " + text.encode("ascii"))
    lines.append(f"{width} {height}".encode("ascii"))
    if maxval is not None:
        lines.append(str(maxval).encode("ascii"))
    return b"\n".join(lines) + b"\n"


def write_pbm_bytes(bits: np.ndarray, comments=()) -> bytes:
    """Serialize a (h, w) array of 0/1 as binary PBM (P4)."""
    bits = np.asarray(bits)
    if bits.ndim != 2:
        raise DomainError("PBM data must be a 2-D bit array")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise DomainError("PBM data must contain only 0 and 1")
    height, width = bits.shape
    packed = np.packbits(bits.astype(np.uint8), axis=1) if width else \
        np.empty((height, 0), dtype=np.uint8)
    return _header(b"P4", width, height, None, comments) + packed.tobytes()


def write_pgm_bytes(samples: np.ndarray, maxval: int, comments=()) -> bytes:
    """Serialize a (h, w) sample array as binary PGM (P5)."""
    samples = np.asarray(samples)
    if samples.ndim != 2:
        raise DomainError("PGM data must be a 2-D sample array")
    return _header(b"P5", samples.shape[1], samples.shape[0], maxval, comments) \
        + _raster_bytes(samples, maxval)


def write_ppm_bytes(samples: np.ndarray, maxval: int, comments=()) -> bytes:
    """Serialize a (h, w, 3) sample array as binary PPM (P6)."""
    samples = np.asarray(samples)
    if samples.ndim != 3 or samples.shape[2] != 3:
        raise DomainError("PPM data must be a (h, w, 3) sample array")
    return _header(b"P6", samples.shape[1], samples.shape[0], maxval, comments) \
        + _raster_bytes(samples, maxval)


def _raster_bytes(samples: np.ndarray, maxval: int) -> bytes:
    if not 1 <= maxval <= MAX_MAXVAL:
        raise DomainError(f"maxval {maxval} out of range 1..{MAX_MAXVAL}")
    if samples.size and (int(samples.min()) < 0 or int(samples.max()) > maxval):
        raise DomainError(f"samples out of range 0..{maxval}")
    if maxval > 255:
        return samples.astype(">u2").tobytes()
    return samples.astype(np.uint8).tobytes()


def write_pnm(path, payload: bytes) -> None:
    with open(path, "wb") as fp:
        fp.write(payload)
