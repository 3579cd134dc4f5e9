"""Spatial encode/decode between integer images and binary bit matrices.

Each pixel's code word is laid out as a square block of bits occupying the
pixel's own position on the surface, so the encoded matrix keeps the image
geometry: an s x s block per pixel, matrix dimensions (s*W, s*H).  Grayscale
and unary images use one word per pixel; color images pack the three 12-bit
channel words into a 6x6 block as column pairs whose channel assignment is
re-randomized per pixel from a seed.

All operations are pure functions of their inputs and are deterministic
regardless of execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import netpbm, rng
from .codebook import Codebook, CodeWord, OrderingPolicy, build_codebook
from .errors import CapabilityError, DomainError, FormatError, MissingMetadataError

MODES = ("gray", "color", "unary")
FORMAT_VERSION = 1

COLOR_BITS_PER_CHANNEL = 12
COLOR_BLOCK_EDGE = 6

# channel-for-pair permutations of (R, G, B), in lexicographic order; a
# pixel's permutation index is its layout stream output mod 6
_CHANNEL_PERMS = np.array(list(permutations(range(3))), dtype=np.uint8)


def _uint_dtype(bit_depth: int):
    for dtype in (np.uint8, np.uint16, np.uint32, np.uint64):
        if bit_depth <= np.dtype(dtype).itemsize * 8:
            return dtype
    raise DomainError(f"bit depth {bit_depth} exceeds 64")


class ImageBuffer:
    """Integer raster with an explicit bit depth.

    samples is (height, width) for grayscale or (height, width, 3) for RGB,
    row-major and channel-interleaved; every sample is < 2**bit_depth.
    """

    __slots__ = ("samples", "bit_depth")

    def __init__(self, samples, bit_depth: int):
        arr = np.asarray(samples)
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise DomainError("samples must be (h, w) or (h, w, 3)")
        if not (np.issubdtype(arr.dtype, np.integer) or np.issubdtype(arr.dtype, np.bool_)):
            raise DomainError("samples must be integers")
        if not 1 <= bit_depth <= 64:
            raise DomainError("bit depth must be in 1..64")
        if arr.size and (int(arr.min()) < 0 or int(arr.max()) >= 2 ** bit_depth):
            raise DomainError(f"samples out of range for bit depth {bit_depth}")
        self.samples = np.array(arr, dtype=_uint_dtype(bit_depth))
        self.bit_depth = bit_depth

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (self.bit_depth == other.bit_depth
                and self.samples.shape == other.samples.shape
                and bool(np.array_equal(self.samples, other.samples)))

    __hash__ = None

    def __repr__(self) -> str:
        return (f"ImageBuffer({self.width}x{self.height}, "
                f"channels={self.channels}, bit_depth={self.bit_depth})")


class BitMatrix:
    """Rectangular grid of bits holding a spatially laid-out encoding."""

    __slots__ = ("cells",)

    def __init__(self, cells):
        arr = np.asarray(cells)
        if arr.ndim != 2:
            raise DomainError("bit matrix must be 2-D")
        if arr.size and not ((arr == 0) | (arr == 1)).all():
            raise DomainError("bit matrix cells must be 0 or 1")
        self.cells = arr.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return (self.cells.shape == other.cells.shape
                and bool(np.array_equal(self.cells, other.cells)))

    __hash__ = None

    def __repr__(self) -> str:
        return f"BitMatrix({self.width}x{self.height})"


@dataclass(frozen=True)
class EncodingMetadata:
    """Everything a decoder needs alongside the bit matrix."""

    mode: str
    bits_per_value: int     # per pixel (gray/unary) or per channel (color)
    block_edge: int
    source_bit_depth: int
    promotion_shift: int
    codebook_kind: str
    policy: OrderingPolicy
    width: int
    height: int
    channel_seed: int | None = None
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise DomainError(f"unsupported format version {self.format_version}")
        if self.mode not in MODES:
            raise DomainError(f"unknown mode {self.mode!r}")
        if self.mode == "unary":
            if self.codebook_kind != "unary":
                raise DomainError("unary mode requires the unary codebook")
            if self.block_edge ** 2 != 2 ** self.bits_per_value:
                raise DomainError("unary block edge must square to 2**bits")
        elif self.codebook_kind not in ("contrast", "standard"):
            raise DomainError(f"bad codebook kind {self.codebook_kind!r}")
        if self.mode == "gray" and self.block_edge ** 2 != self.bits_per_value:
            raise DomainError("gray block edge must square to the bit depth")
        if self.mode == "color":
            if (self.bits_per_value, self.block_edge) != (COLOR_BITS_PER_CHANNEL,
                                                          COLOR_BLOCK_EDGE):
                raise DomainError("color mode uses 12 bits per channel in 6x6 blocks")
            if self.channel_seed is not None and not 0 <= self.channel_seed < 2**64:
                raise DomainError("channel seed must fit in 64 unsigned bits")
        elif self.channel_seed is not None:
            raise DomainError(f"{self.mode} mode takes no channel seed")
        if self.source_bit_depth < 1:
            raise DomainError("source bit depth must be >= 1")
        if self.promotion_shift < 0:
            raise DomainError("promotion shift must be >= 0")
        if self.source_bit_depth + self.promotion_shift > self.bits_per_value:
            raise DomainError("promoted samples would not fit the code words")
        if self.width < 0 or self.height < 0:
            raise DomainError("image dimensions must be >= 0")

    @property
    def matrix_width(self) -> int:
        return self.width * self.block_edge

    @property
    def matrix_height(self) -> int:
        return self.height * self.block_edge


# -- bit-depth promotion -------------------------------------------------------

def promote_bit_depth(img: ImageBuffer, target_bits: int,
                      shift: int | None = None) -> ImageBuffer:
    """Losslessly widen an image by multiplying samples by a power of two.

    By default samples are shifted left by target_bits - bit_depth so the
    value range fills the new depth; an explicit smaller shift is allowed
    (it leaves headroom, dimming the eventual render).  Inverse: shift right.
    """
    if target_bits < img.bit_depth:
        raise DomainError("bit-depth demotion is lossy and refused here")
    if shift is None:
        shift = target_bits - img.bit_depth
    if shift < 0 or img.bit_depth + shift > target_bits:
        raise DomainError(f"promotion shift {shift} does not fit target depth")
    samples = img.samples.astype(np.uint64) << np.uint64(shift)
    return ImageBuffer(samples, target_bits)


def demote_bit_depth(img: ImageBuffer, shift: int, target_bits: int,
                     clamp: bool = True) -> ImageBuffer:
    """Undo a promotion: shift samples right and narrow the declared depth.

    Decoding damaged data can leave values above the original range; those
    are clamped (or rejected with clamp=False).
    """
    if shift < 0 or target_bits < 1:
        raise DomainError("bad demotion parameters")
    samples = img.samples.astype(np.uint64) >> np.uint64(shift)
    if clamp:
        samples = np.minimum(samples, np.uint64(2 ** target_bits - 1))
    return ImageBuffer(samples, target_bits)


# -- block layout ---------------------------------------------------------------

def layout_block(word: CodeWord, block_edge: int) -> np.ndarray:
    """Arrange a word as an s x s block, bit 0 top-left, row-major."""
    if block_edge < 1 or block_edge ** 2 != word.width:
        raise DomainError(
            f"word of width {word.width} does not fill a {block_edge}x{block_edge} block"
        )
    return np.array(word.bits, dtype=np.uint8).reshape(block_edge, block_edge)


def unlayout_block(block: np.ndarray) -> CodeWord:
    """Exact inverse of layout_block."""
    block = np.asarray(block)
    if block.ndim != 2 or block.shape[0] != block.shape[1]:
        raise DomainError("block must be square")
    return CodeWord(tuple(int(b) for b in block.reshape(-1)))


def _block_edge_for(cb: Codebook) -> int:
    edge = math.isqrt(cb.word_width)
    if edge * edge != cb.word_width:
        raise CapabilityError(
            f"{cb.kind} codebook at bit depth {cb.bit_depth} has {cb.word_width}-bit "
            "words, which do not form square blocks"
        )
    return edge


def _blocks_to_matrix(bits: np.ndarray, height: int, width: int, edge: int) -> np.ndarray:
    # (h, w, s*s) word bits -> (h*s, w*s) cells
    return (bits.reshape(height, width, edge, edge)
            .transpose(0, 2, 1, 3)
            .reshape(height * edge, width * edge))


def _matrix_to_blocks(cells: np.ndarray, height: int, width: int, edge: int) -> np.ndarray:
    # (h*s, w*s) cells -> (h, w, s*s) word bits
    return (cells.reshape(height, edge, width, edge)
            .transpose(0, 2, 1, 3)
            .reshape(height, width, edge * edge))


def _words_to_bits(cb: Codebook, values: np.ndarray) -> np.ndarray:
    """(...,) value array -> (..., word_width) uint8 bit array."""
    table = cb.bit_table()
    if table is not None:
        return table[values]
    words = np.empty(values.shape, dtype=np.uint64)
    flat_in = values.reshape(-1)
    flat_out = words.reshape(-1)
    for i in range(flat_in.size):
        flat_out[i] = cb.word_int(int(flat_in[i]))
    shifts = np.arange(cb.word_width - 1, -1, -1, dtype=np.uint64)
    return ((words[..., None] >> shifts) & np.uint64(1)).astype(np.uint8)


def _bits_to_values(cb: Codebook, bits: np.ndarray) -> np.ndarray:
    """(..., word_width) uint8 bit array -> (...,) decoded value array."""
    if cb.kind == "unary":
        counts = bits.sum(axis=-1, dtype=np.uint32)
        return np.minimum(counts, cb.size - 1)
    weights = (np.uint64(1) << np.arange(cb.word_width - 1, -1, -1, dtype=np.uint64))
    words = (bits.astype(np.uint64) * weights).sum(axis=-1, dtype=np.uint64)
    tables = cb.int_tables()
    if tables is not None:
        return tables[1][words]
    values = np.empty(words.shape, dtype=np.uint64)
    flat_in = words.reshape(-1)
    flat_out = values.reshape(-1)
    for i in range(flat_in.size):
        flat_out[i] = cb.value_of_word_int(int(flat_in[i]))
    return values


# -- grayscale / unary ----------------------------------------------------------

def encode_gray(img: ImageBuffer, cb: Codebook,
                source_bit_depth: int | None = None,
                promotion_shift: int | None = None) -> tuple[BitMatrix, EncodingMetadata]:
    """Encode a single-channel image already promoted to the codebook depth.

    source_bit_depth/promotion_shift describe the promotion that produced
    img and are recorded in the metadata; they default to "no promotion".
    """
    if img.channels != 1:
        raise DomainError("grayscale encoding takes a single-channel image")
    if img.bit_depth != cb.bit_depth:
        raise DomainError(
            f"image depth {img.bit_depth} != codebook depth {cb.bit_depth}; promote first"
        )
    edge = _block_edge_for(cb)
    mode = "unary" if cb.kind == "unary" else "gray"
    if source_bit_depth is None:
        source_bit_depth = img.bit_depth if promotion_shift is None \
            else img.bit_depth - promotion_shift
    if promotion_shift is None:
        promotion_shift = cb.bit_depth - source_bit_depth
    meta = EncodingMetadata(
        mode=mode, bits_per_value=cb.bit_depth, block_edge=edge,
        source_bit_depth=source_bit_depth, promotion_shift=promotion_shift,
        codebook_kind=cb.kind, policy=cb.policy,
        width=img.width, height=img.height,
    )
    bits = _words_to_bits(cb, img.samples)
    return BitMatrix(_blocks_to_matrix(bits, img.height, img.width, edge)), meta


def decode_gray(bits: BitMatrix, meta: EncodingMetadata, cb: Codebook) -> ImageBuffer:
    """Exact inverse of encode_gray; total on damaged input."""
    if meta.mode not in ("gray", "unary"):
        raise FormatError(f"decode_gray cannot handle mode {meta.mode!r}")
    _check_codebook_matches(meta, cb)
    _check_matrix_dims(bits, meta)
    blocks = _matrix_to_blocks(bits.cells, meta.height, meta.width, meta.block_edge)
    values = _bits_to_values(cb, blocks)
    return ImageBuffer(values, meta.bits_per_value)


def _check_codebook_matches(meta: EncodingMetadata, cb: Codebook) -> None:
    if (cb.bit_depth, cb.kind, cb.policy) != (meta.bits_per_value,
                                              meta.codebook_kind, meta.policy):
        raise FormatError(
            f"codebook ({cb.bit_depth}, {cb.kind}, {cb.policy}) does not match "
            f"metadata ({meta.bits_per_value}, {meta.codebook_kind}, {meta.policy})"
        )


def _check_matrix_dims(bits: BitMatrix, meta: EncodingMetadata) -> None:
    if (bits.height, bits.width) != (meta.matrix_height, meta.matrix_width):
        raise FormatError(
            f"matrix is {bits.width}x{bits.height}, metadata says "
            f"{meta.matrix_width}x{meta.matrix_height}"
        )


# -- color ----------------------------------------------------------------------

def channel_layout(channel_seed: int, x: int, y: int) -> tuple[int, int, int]:
    """Channel occupying each column pair of the 6x6 block at pixel (x, y)."""
    u = rng.stream(channel_seed, x, y).next64()
    return tuple(int(c) for c in _CHANNEL_PERMS[u % 6])


def _channel_perm_grid(channel_seed: int, width: int, height: int) -> np.ndarray:
    """(h, w, 3) channel index per column pair, vectorized over pixels."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.uint64)
    u = rng.first_output_vec(rng.fold64_vec(np.uint64(channel_seed), xs, ys))
    return _CHANNEL_PERMS[(u % np.uint64(6)).astype(np.intp)]


def encode_color(img: ImageBuffer, cb: Codebook, channel_seed: int,
                 source_bit_depth: int | None = None,
                 promotion_shift: int | None = None) -> tuple[BitMatrix, EncodingMetadata]:
    """Encode an RGB image at 12 bits per channel into 6x6 pixel blocks.

    Each channel's word fills one column pair top to bottom, left column
    first; which pair holds which channel is drawn per pixel from
    channel_seed so no image column carries a single color.
    """
    if img.channels != 3:
        raise DomainError("color encoding takes a three-channel image")
    if cb.kind == "unary":
        raise CapabilityError("color encoding does not support unary codebooks")
    if cb.bit_depth != COLOR_BITS_PER_CHANNEL:
        raise DomainError(f"color encoding requires a {COLOR_BITS_PER_CHANNEL}-bit codebook")
    if img.bit_depth != cb.bit_depth:
        raise DomainError(
            f"image depth {img.bit_depth} != codebook depth {cb.bit_depth}; promote first"
        )
    if source_bit_depth is None:
        source_bit_depth = img.bit_depth if promotion_shift is None \
            else img.bit_depth - promotion_shift
    if promotion_shift is None:
        promotion_shift = cb.bit_depth - source_bit_depth
    meta = EncodingMetadata(
        mode="color", bits_per_value=COLOR_BITS_PER_CHANNEL, block_edge=COLOR_BLOCK_EDGE,
        source_bit_depth=source_bit_depth, promotion_shift=promotion_shift,
        codebook_kind=cb.kind, policy=cb.policy,
        width=img.width, height=img.height, channel_seed=channel_seed,
    )
    height, width = img.height, img.width
    word_bits = _words_to_bits(cb, img.samples)            # (h, w, 3, 12)
    perm = _channel_perm_grid(channel_seed, width, height)  # (h, w, 3)
    pair_bits = np.take_along_axis(word_bits, perm[..., None].astype(np.intp), axis=2)
    cells = (pair_bits.reshape(height, width, 3, 2, COLOR_BLOCK_EDGE)
             .transpose(0, 4, 1, 2, 3)
             .reshape(height * COLOR_BLOCK_EDGE, width * COLOR_BLOCK_EDGE))
    return BitMatrix(cells), meta


def decode_color(bits: BitMatrix, meta: EncodingMetadata, cb: Codebook) -> ImageBuffer:
    """Exact inverse of encode_color; needs meta.channel_seed to unscramble."""
    if meta.mode != "color":
        raise FormatError(f"decode_color cannot handle mode {meta.mode!r}")
    if meta.channel_seed is None:
        raise MissingMetadataError(
            "color decoding requires the channel seed from the metadata sidecar"
        )
    _check_codebook_matches(meta, cb)
    _check_matrix_dims(bits, meta)
    height, width = meta.height, meta.width
    pair_bits = (bits.cells
                 .reshape(height, COLOR_BLOCK_EDGE, width, 3, 2)
                 .transpose(0, 2, 3, 4, 1)
                 .reshape(height, width, 3, COLOR_BITS_PER_CHANNEL))
    pair_values = _bits_to_values(cb, pair_bits)            # (h, w, 3) per pair
    perm = _channel_perm_grid(meta.channel_seed, width, height)
    values = np.empty((height, width, 3), dtype=pair_values.dtype)
    np.put_along_axis(values, perm.astype(np.intp), pair_values, axis=2)
    return ImageBuffer(values, COLOR_BITS_PER_CHANNEL)


# -- metadata sidecar -------------------------------------------------------------

_SIDECAR_KEYS = ("format_version", "mode", "codebook", "bits", "block_edge",
                 "source_bit_depth", "promotion_shift", "policy",
                 "width", "height", "channel_seed")


def metadata_to_text(meta: EncodingMetadata) -> str:
    lines = [
        "# contrast-codec sidecar",
        f"format_version = {meta.format_version}",
        f"mode = {meta.mode}",
        f"codebook = {meta.codebook_kind}",
        f"bits = {meta.bits_per_value}",
        f"block_edge = {meta.block_edge}",
        f"source_bit_depth = {meta.source_bit_depth}",
        f"promotion_shift = {meta.promotion_shift}",
        f"policy = {meta.policy}",
        f"width = {meta.width}",
        f"height = {meta.height}",
    ]
    if meta.channel_seed is not None:
        lines.append(f"channel_seed = {meta.channel_seed}")
    return "\n".join(lines) + "\n"


def metadata_from_text(text: str) -> EncodingMetadata:
    """Parse a sidecar; strict about keys, free about order."""
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key or not value:
            raise FormatError(f"sidecar line {lineno}: expected 'key = value'")
        if key not in _SIDECAR_KEYS:
            raise FormatError(f"sidecar line {lineno}: unknown key {key!r}")
        if key in fields:
            raise FormatError(f"sidecar line {lineno}: duplicate key {key!r}")
        fields[key] = value

    missing = [k for k in _SIDECAR_KEYS
               if k not in fields and k != "channel_seed"]
    if missing:
        raise FormatError(f"sidecar is missing keys: {', '.join(missing)}")
    try:
        meta = EncodingMetadata(
            format_version=int(fields["format_version"]),
            mode=fields["mode"],
            codebook_kind=fields["codebook"],
            bits_per_value=int(fields["bits"]),
            block_edge=int(fields["block_edge"]),
            source_bit_depth=int(fields["source_bit_depth"]),
            promotion_shift=int(fields["promotion_shift"]),
            policy=OrderingPolicy.parse(fields["policy"]),
            width=int(fields["width"]),
            height=int(fields["height"]),
            channel_seed=int(fields["channel_seed"]) if "channel_seed" in fields else None,
        )
    except (ValueError, DomainError) as exc:
        raise FormatError(f"bad sidecar: {exc}") from None
    return meta


def codebook_for(meta: EncodingMetadata) -> Codebook:
    """Build the codebook the metadata describes."""
    return build_codebook(meta.bits_per_value, meta.codebook_kind, meta.policy)


# -- typed netpbm bindings ---------------------------------------------------------

def read_image(path) -> ImageBuffer:
    """Load a PGM/PPM as an image; bit depth inferred from maxval."""
    pnm = netpbm.read_pnm(path)
    if pnm.kind == "pbm":
        raise FormatError(f"{path}: expected a PGM/PPM image, found PBM")
    return ImageBuffer(pnm.pixels, pnm.maxval.bit_length())


def write_image(path, img: ImageBuffer, comments=()) -> None:
    """Write an image as PGM (1 channel) or PPM (3 channels)."""
    maxval = 2 ** img.bit_depth - 1
    if img.channels == 1:
        payload = netpbm.write_pgm_bytes(img.samples, maxval, comments)
    else:
        payload = netpbm.write_ppm_bytes(img.samples, maxval, comments)
    netpbm.write_pnm(path, payload)


def read_bit_matrix(path) -> BitMatrix:
    pnm = netpbm.read_pnm(path)
    if pnm.kind != "pbm":
        raise FormatError(f"{path}: expected a PBM bit matrix, found {pnm.kind.upper()}")
    return BitMatrix(pnm.pixels)


def write_bit_matrix(path, bits: BitMatrix, comments=()) -> None:
    netpbm.write_pnm(path, netpbm.write_pbm_bytes(bits.cells, comments))


def read_metadata(path) -> EncodingMetadata:
    with open(path, "r", encoding="ascii") as fp:
        return metadata_from_text(fp.read())


def write_metadata(path, meta: EncodingMetadata) -> None:
    with open(path, "w", encoding="ascii") as fp:
        fp.write(metadata_to_text(meta))
