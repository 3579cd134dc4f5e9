"""Pixel-value <-> code-word dictionaries with popcount-ordered classes.

The central dictionary ("contrast") hands out all 2**b words of width b so
that the number of 1 bits never decreases as the pixel value grows: value 0
gets the all-zero word, values 1..b get the b single-1 words, and so on up
to the all-ones word for the maximum value.  Values inside one popcount
class are interchangeable for rendering, so the class-internal order is
either canonical (ascending numeric value of the word, read MSB first) or a
seeded per-class shuffle.

Two reference dictionaries are included for comparison: "standard" (plain
unsigned binary) and "unary" (2**b bits per pixel, exactly v ones for value
v; decodes by popcount alone, which makes it maximally damage tolerant).

Codebooks are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import CapabilityError, DomainError, FormatError

KINDS = ("contrast", "standard", "unary")
POLICY_KINDS = ("canonical", "shuffled")

MAX_BIT_DEPTH = 64
MAX_UNARY_BIT_DEPTH = 8

# full lookup tables are materialized only up to this depth; beyond it,
# lookups run through combinatorial (un)ranking per call
_TABLE_MAX_BIT_DEPTH = 16

_DUMP_HEADER_RE = re.compile(
    r"^contrast-codebook v1 b=(\d+) kind=(\w+) policy=(\S+)$"
)


@dataclass(frozen=True)
class OrderingPolicy:
    """How values are assigned to words inside one popcount class.

    kind is "canonical" (ascending numeric word order) or "shuffled"
    (deterministic seeded permutation); seed is present iff shuffled.
    """

    kind: str = "canonical"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise DomainError(f"unknown ordering policy {self.kind!r}")
        if self.kind == "shuffled":
            if self.seed is None:
                raise DomainError("shuffled policy requires a seed")
            if not 0 <= self.seed < 2**64:
                raise DomainError("policy seed must fit in 64 unsigned bits")
        elif self.seed is not None:
            raise DomainError("canonical policy takes no seed")

    def __str__(self) -> str:
        if self.kind == "shuffled":
            return f"shuffled:{self.seed}"
        return "canonical"

    @classmethod
    def parse(cls, text: str) -> "OrderingPolicy":
        """Parse the sidecar form: "canonical" or "shuffled:<seed>"."""
        if text == "canonical":
            return cls()
        if text.startswith("shuffled:"):
            try:
                seed = int(text.partition(":")[2])
            except ValueError:
                raise DomainError(f"bad policy seed in {text!r}") from None
            return cls("shuffled", seed)
        raise DomainError(f"unparseable ordering policy {text!r}")


CANONICAL = OrderingPolicy()


@dataclass(frozen=True)
class CodeWord:
    """A fixed-width binary word; bits[0] is the leftmost printed digit."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise DomainError("code word bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return len(self.bits)

    @property
    def popcount(self) -> int:
        return sum(self.bits)

    def to_int(self) -> int:
        """Numeric value of the word read MSB first."""
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value

    @classmethod
    def from_int(cls, width: int, number: int) -> "CodeWord":
        if width < 1:
            raise DomainError("code word width must be >= 1")
        if not 0 <= number < (1 << width):
            raise DomainError(f"{number} does not fit in {width} bits")
        return cls(tuple((number >> (width - 1 - i)) & 1 for i in range(width)))

    @classmethod
    def from_string(cls, text: str) -> "CodeWord":
        if not text or set(text) - {"0", "1"}:
            raise DomainError(f"bad code word string {text!r}")
        return cls(tuple(int(c) for c in text))

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


def class_start(bit_depth: int, ones: int) -> int:
    """First pixel value whose contrast word contains `ones` 1 bits.

    Equals the number of words with fewer than `ones` 1 bits, i.e. the sum
    of C(bit_depth, k) for k < ones.  class_start(b, b + 1) == 2**b.
    Computed in exact integer arithmetic.
    """
    if bit_depth < 1:
        raise DomainError("bit depth must be >= 1")
    if not 0 <= ones <= bit_depth + 1:
        raise DomainError(
            f"popcount class {ones} out of range 0..{bit_depth + 1}"
        )
    return sum(math.comb(bit_depth, k) for k in range(ones))


def _unrank_word(width: int, ones: int, index: int) -> int:
    """index-th smallest width-bit integer with exactly `ones` bits set."""
    word = 0
    position = width - 1
    remaining = ones
    while remaining:
        while math.comb(position, remaining) > index:
            position -= 1
        word |= 1 << position
        index -= math.comb(position, remaining)
        remaining -= 1
        position -= 1
    return word


def _rank_word(word: int) -> int:
    """Position of `word` among equal-popcount integers in ascending order."""
    index = 0
    remaining = word.bit_count()
    while word:
        position = word.bit_length() - 1
        index += math.comb(position, remaining)
        remaining -= 1
        word ^= 1 << position
    return index


class Codebook:
    """Bijective map between pixel values 0..2**b - 1 and code words.

    Use build_codebook() or load_codebook() to construct one.  Lookups are
    pure; all caches are built on first use and then only read.
    """

    def __init__(self, bit_depth: int, kind: str, policy: OrderingPolicy = CANONICAL,
                 _forward_override: list[int] | None = None):
        if kind not in KINDS:
            raise DomainError(f"unknown codebook kind {kind!r}")
        if bit_depth < 1:
            raise DomainError("bit depth must be >= 1")
        if bit_depth > MAX_BIT_DEPTH:
            raise CapabilityError(f"bit depth {bit_depth} exceeds {MAX_BIT_DEPTH}")
        if kind == "unary" and bit_depth > MAX_UNARY_BIT_DEPTH:
            raise CapabilityError(
                f"unary words need 2**{bit_depth} bits per pixel; "
                f"supported up to bit depth {MAX_UNARY_BIT_DEPTH}"
            )
        self.bit_depth = bit_depth
        self.kind = kind
        self.policy = policy
        self.size = 1 << bit_depth
        self.word_width = (1 << bit_depth) if kind == "unary" else bit_depth
        self._starts = (
            [class_start(bit_depth, n) for n in range(bit_depth + 2)]
            if kind == "contrast" else None
        )
        self._perms: dict[int, tuple[list[int], list[int]]] = {}
        self._bit_table: np.ndarray | None = None
        self._int_tables: tuple[np.ndarray, np.ndarray] | None = None
        self._forward = _forward_override
        self._inverse = None
        if _forward_override is not None:
            self._inverse = {w: v for v, w in enumerate(_forward_override)}

    # -- scalar lookups ----------------------------------------------------

    def word_int(self, value: int) -> int:
        """Code word for `value`, as an integer read MSB first."""
        if not 0 <= value < self.size:
            raise DomainError(f"pixel value {value} out of range 0..{self.size - 1}")
        if self._forward is not None:
            return self._forward[value]
        if self.kind == "standard":
            return value
        if self.kind == "contrast":
            n = bisect_right(self._starts, value) - 1
            index = value - self._starts[n]
            if self.policy.kind == "shuffled":
                index = self._class_perm(n)[0][index]
            return _unrank_word(self.bit_depth, n, index)
        # unary
        if self.policy.kind == "canonical":
            return ((1 << value) - 1) << (self.word_width - value)
        word = 0
        for printed in self._unary_positions(value):
            word |= 1 << (self.word_width - 1 - printed)
        return word

    def value_of_word_int(self, word: int) -> int:
        """Pixel value for a word integer; total for contrast/standard.

        Unary words decode by popcount clamped to the value range, so any
        damaged word still yields a value.
        """
        if not 0 <= word < (1 << self.word_width):
            raise DomainError(f"word does not fit in {self.word_width} bits")
        if self.kind == "unary":
            return min(word.bit_count(), self.size - 1)
        if self._inverse is not None:
            return self._inverse[word]
        if self.kind == "standard":
            return word
        n = word.bit_count()
        index = _rank_word(word)
        if self.policy.kind == "shuffled":
            index = self._class_perm(n)[1][index]
        return self._starts[n] + index

    def word_for_value(self, value: int) -> CodeWord:
        return CodeWord.from_int(self.word_width, self.word_int(value))

    def value_for_word(self, word: CodeWord) -> int:
        if word.width != self.word_width:
            raise DomainError(
                f"word width {word.width} does not match codebook width {self.word_width}"
            )
        return self.value_of_word_int(word.to_int())

    # -- class machinery ---------------------------------------------------

    def _class_perm(self, n: int) -> tuple[list[int], list[int]]:
        """(perm, inverse perm) for popcount class n under the shuffled policy."""
        cached = self._perms.get(n)
        if cached is not None:
            return cached
        count = math.comb(self.bit_depth, n)
        perm = list(range(count))
        rng.stream(self.policy.seed, self.bit_depth, n).shuffle(perm)
        inverse = [0] * count
        for i, p in enumerate(perm):
            inverse[p] = i
        self._perms[n] = (perm, inverse)
        return self._perms[n]

    def _unary_positions(self, value: int) -> list[int]:
        """Printed bit positions set for `value` under the shuffled policy."""
        positions = list(range(self.word_width))
        rng.stream(self.policy.seed, self.bit_depth, value).shuffle(positions)
        return positions[:value]

    def popcount_of_value(self, value: int) -> int:
        """Popcount of the word for `value`, without materializing the word."""
        if not 0 <= value < self.size:
            raise DomainError(f"pixel value {value} out of range 0..{self.size - 1}")
        if self.kind == "contrast":
            return bisect_right(self._starts, value) - 1
        if self.kind == "unary":
            return value
        if self._forward is not None:
            return self._forward[value].bit_count()
        return value.bit_count()

    # -- bulk tables (used by the codec's vectorized paths) -----------------

    def int_tables(self) -> tuple[np.ndarray, np.ndarray] | None:
        """(forward word ints, inverse values) arrays, or None when impractical.

        Available for contrast/standard up to bit depth 16.  forward[v] is the
        word integer for value v; inverse[w] the value decoding word w (total).
        """
        if self.kind == "unary" or self.bit_depth > _TABLE_MAX_BIT_DEPTH:
            return None
        if self._int_tables is None:
            if self._forward is not None:
                forward = np.asarray(self._forward, dtype=np.uint32)
            elif self.kind == "standard":
                forward = np.arange(self.size, dtype=np.uint32)
            else:
                words = np.arange(self.size, dtype=np.uint32)
                pops = np.unpackbits(words.view(np.uint8).reshape(-1, 4), axis=1).sum(axis=1)
                # stable sort by popcount keeps numeric order inside classes,
                # which is exactly the canonical assignment
                forward = np.argsort(pops, kind="stable").astype(np.uint32)
                if self.policy.kind == "shuffled":
                    forward = forward.copy()
                    for n in range(self.bit_depth + 1):
                        lo, hi = self._starts[n], self._starts[n + 1]
                        perm = np.asarray(self._class_perm(n)[0], dtype=np.intp)
                        forward[lo:hi] = forward[lo:hi][perm]
            inverse = np.empty(self.size, dtype=np.uint32)
            inverse[forward] = np.arange(self.size, dtype=np.uint32)
            self._int_tables = (forward, inverse)
        return self._int_tables

    def bit_table(self) -> np.ndarray | None:
        """(size, word_width) uint8 array of word bits, or None when impractical."""
        if self._bit_table is not None:
            return self._bit_table
        if self.kind == "unary":
            table = np.zeros((self.size, self.word_width), dtype=np.uint8)
            for v in range(self.size):
                if self._forward is not None:
                    word = self._forward[v]
                    table[v] = [(word >> (self.word_width - 1 - i)) & 1
                                for i in range(self.word_width)]
                elif self.policy.kind == "canonical":
                    table[v, :v] = 1
                else:
                    table[v, self._unary_positions(v)] = 1
            self._bit_table = table
            return table
        tables = self.int_tables()
        if tables is None:
            return None
        shifts = np.arange(self.word_width - 1, -1, -1, dtype=np.uint32)
        self._bit_table = ((tables[0][:, None] >> shifts) & 1).astype(np.uint8)
        return self._bit_table

    def __repr__(self) -> str:
        return f"Codebook(bit_depth={self.bit_depth}, kind={self.kind!r}, policy={self.policy})"


def build_codebook(bit_depth: int, kind: str = "contrast",
                   policy: OrderingPolicy = CANONICAL) -> Codebook:
    """Construct a codebook.

    bit_depth is the number of bits per pixel value; unary codebooks use
    words of 2**bit_depth bits and are capped at bit_depth 8.
    """
    return Codebook(bit_depth, kind, policy)


def word_for_value(cb: Codebook, value: int) -> CodeWord:
    return cb.word_for_value(value)


def value_for_word(cb: Codebook, word: CodeWord) -> int:
    return cb.value_for_word(word)


# -- text key file -----------------------------------------------------------

def dump_codebook(cb: Codebook, fp) -> None:
    """Write the full value -> word table as a text key file."""
    fp.write(f"contrast-codebook v1 b={cb.bit_depth} kind={cb.kind} policy={cb.policy}\n")
    for value in range(cb.size):
        fp.write(f"{value} {cb.word_for_value(value)}\n")


def load_codebook(fp) -> Codebook:
    """Parse a text key file back into a codebook.

    The file's mapping is authoritative; it is validated against the header's
    kind (bijection, popcount monotonicity for contrast, identity for
    standard, popcount == value for unary).
    """
    header = fp.readline().rstrip("\n")
    m = _DUMP_HEADER_RE.match(header)
    if not m:
        raise FormatError(f"bad codebook header {header!r}")
    bit_depth = int(m.group(1))
    kind = m.group(2)
    try:
        policy = OrderingPolicy.parse(m.group(3))
        probe = Codebook(bit_depth, kind, policy)
    except DomainError as exc:
        raise FormatError(f"bad codebook header: {exc}") from None
    size, width = probe.size, probe.word_width

    forward: list[int | None] = [None] * size
    for lineno, line in enumerate(fp, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected '<value> <bits>'")
        try:
            value = int(parts[0])
            word = CodeWord.from_string(parts[1])
        except (ValueError, DomainError):
            raise FormatError(f"line {lineno}: unparseable entry {line!r}") from None
        if not 0 <= value < size:
            raise FormatError(f"line {lineno}: value {value} out of range")
        if word.width != width:
            raise FormatError(f"line {lineno}: word width {word.width}, expected {width}")
        if forward[value] is not None:
            raise FormatError(f"line {lineno}: duplicate value {value}")
        forward[value] = word.to_int()

    if any(w is None for w in forward):
        missing = next(v for v, w in enumerate(forward) if w is None)
        raise FormatError(f"codebook file is missing value {missing}")
    if len(set(forward)) != size:
        raise FormatError("codebook file maps two values to the same word")
    if kind == "contrast":
        pops = [w.bit_count() for w in forward]
        if any(a > b for a, b in zip(pops, pops[1:])):
            raise FormatError("contrast codebook file has a popcount reversal")
    elif kind == "standard":
        if any(w != v for v, w in enumerate(forward)):
            raise FormatError("standard codebook file is not plain binary")
    else:
        if any(w.bit_count() != v for v, w in enumerate(forward)):
            raise FormatError("unary codebook file has popcount != value")
    return Codebook(bit_depth, kind, policy, _forward_override=forward)
