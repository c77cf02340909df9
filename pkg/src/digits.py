"""
Base-b digit streams: generators, in-memory wrappers and the digit file format.

Streams are pull-based. A DigitStream is only a descriptor (base, source,
length); every call to `chunks()` restarts the source and yields numpy arrays,
so 10^7-digit experiments never hold the whole sequence in memory.

The seeded-uniform control uses SplitMix64 over a Weyl sequence:

    x_i = seed + i * 0x9E3779B97F4A7C15            (mod 2^64), i = 1, 2, ...
    z   = (x_i ^ (x_i >> 30)) * 0xBF58476D1CE4E5B9 (mod 2^64)
    z   = (z   ^ (z   >> 27)) * 0x94D049BB133111EB (mod 2^64)
    z   =  z   ^ (z   >> 31)
    digit_i = z mod base
"""
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from src import config
from src.utils import ValidationError, ensure_parent

ALPHABET = '0123456789abcdefghijklmnopqrstuvwxyz'
PACKED_MAX_BASE = len(ALPHABET)

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

_HEADER_RE = re.compile(r'^#\s*base\s*=\s*(\d+)\s*$')

# Byte value -> digit value for packed bodies, -1 marks an illegal character.
_CHAR_TO_DIGIT = np.full(256, -1, dtype=np.int64)
for _value, _char in enumerate(ALPHABET):
    _CHAR_TO_DIGIT[ord(_char)] = _value
    _CHAR_TO_DIGIT[ord(_char.upper())] = _value
_DIGIT_TO_CHAR = np.frombuffer(ALPHABET.encode('ascii'), dtype=np.uint8)


class DigitError(ValidationError):
    pass


class DigitFileError(DigitError):
    """Malformed digit file; `line` and `offset` are 1-based."""

    def __init__(self, message: str, path, line: int, offset: int = 0):
        self.path = str(path)
        self.line = line
        self.offset = offset
        where = f"line {line}" + (f", offset {offset}" if offset else "")
        super().__init__(f"{path}: {where}: {message}")


@dataclass
class DigitStream:
    base: int
    source: str  # champernowne | constant | periodic | seeded_uniform | file | digits
    length: Optional[int] = None  # None means unbounded
    digit: Optional[int] = None
    pattern: tuple = ()
    seed: Optional[int] = None
    path: Optional[str] = None
    values: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def finite(self) -> bool:
        return self.length is not None

    def __len__(self):
        if self.length is None:
            raise TypeError("unbounded stream has no length")
        return self.length

    def chunks(self, size: int = config.CHUNK_SIZE) -> Iterator[np.ndarray]:
        """Restarts the source and yields int64 arrays of at most `size` digits."""
        if self.source == 'champernowne':
            return _champernowne_chunks(self.base, self.length, size)
        if self.source == 'constant':
            return _periodic_chunks((self.digit,), self.length, size)
        if self.source == 'periodic':
            return _periodic_chunks(self.pattern, self.length, size)
        if self.source == 'seeded_uniform':
            return _seeded_chunks(self.base, self.seed, self.length, size)
        if self.source == 'file':
            return _file_chunks(self.path, size)
        if self.source == 'digits':
            return (self.values[i:i + size] for i in range(0, len(self.values), size))
        raise DigitError(f"Unknown stream source '{self.source}'")

    def __iter__(self) -> Iterator[int]:
        for chunk in self.chunks():
            yield from chunk.tolist()

    def to_array(self) -> np.ndarray:
        if not self.finite:
            raise DigitError("Cannot materialise an unbounded stream")
        if self.source == 'digits':
            return self.values
        parts = list(self.chunks())
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(parts)

    def describe(self) -> dict:
        """Descriptor used in manifests; in-memory digits are described by size only."""
        info = {'source': self.source, 'base': self.base, 'length': self.length}
        if self.digit is not None:
            info['digit'] = self.digit
        if self.pattern:
            info['pattern'] = list(self.pattern)
        if self.seed is not None:
            info['seed'] = self.seed
        if self.path is not None:
            info['path'] = self.path
        return info

    @classmethod
    def from_digits(cls, base: int, digits) -> 'DigitStream':
        _check_base(base)
        values = np.ascontiguousarray(np.asarray(digits, dtype=np.int64).reshape(-1))
        if values.size and (values.min() < 0 or values.max() >= base):
            raise DigitError(f"Digits out of range for base {base}")
        return cls(base=base, source='digits', length=int(values.size), values=values)


def _check_base(base: int):
    if not isinstance(base, (int, np.integer)) or base < 2:
        raise DigitError(f"Base must be an integer >= 2, got {base}")


def _check_count(count):
    if count is not None and count < 0:
        raise DigitError(f"Count must be >= 0, got {count}")


# --- Generators ---

def gen_champernowne(base: int, count: Optional[int] = None) -> DigitStream:
    """Digits of 1, 2, 3, ... written in `base` and concatenated."""
    _check_base(base)
    _check_count(count)
    return DigitStream(base=base, source='champernowne', length=count)


def gen_constant(base: int, d: int, count: Optional[int] = None) -> DigitStream:
    _check_base(base)
    _check_count(count)
    if not 0 <= d < base:
        raise DigitError(f"Digit {d} out of range for base {base}")
    return DigitStream(base=base, source='constant', length=count, digit=d)


def gen_periodic(base: int, pattern, count: Optional[int] = None) -> DigitStream:
    _check_base(base)
    _check_count(count)
    pattern = tuple(int(d) for d in pattern)
    if not pattern:
        raise DigitError("Periodic pattern must be nonempty")
    bad = [d for d in pattern if not 0 <= d < base]
    if bad:
        raise DigitError(f"Pattern digits {bad} out of range for base {base}")
    return DigitStream(base=base, source='periodic', length=count, pattern=pattern)


def gen_seeded_uniform(base: int, seed: int = config.DEFAULT_SEED, count: Optional[int] = None) -> DigitStream:
    _check_base(base)
    _check_count(count)
    return DigitStream(base=base, source='seeded_uniform', length=count, seed=int(seed) & _MASK64)


SOURCES = ('champernowne', 'constant', 'periodic', 'seeded_uniform', 'file')


def open_stream(source: str, base: Optional[int] = None, count: Optional[int] = None, seed: Optional[int] = None,
                digit: Optional[int] = None, pattern=None, path=None) -> DigitStream:
    """Builds a stream from a source descriptor as given on the command line or in a config file."""
    if source == 'file':
        if path is None:
            raise DigitError("file source needs a path")
        stream = read_digit_file(path)
        if base is not None and base != stream.base:
            raise DigitError(f"{path} holds base {stream.base} digits, expected base {base}")
        if count is not None and count < stream.length:
            stream = DigitStream.from_digits(stream.base, stream.to_array()[:count])
        return stream
    base = config.DEFAULT_BASE if base is None else base
    if source == 'champernowne':
        return gen_champernowne(base, count)
    if source == 'constant':
        if digit is None:
            raise DigitError("constant source needs a digit")
        return gen_constant(base, digit, count)
    if source == 'periodic':
        if pattern is None:
            raise DigitError("periodic source needs a pattern")
        return gen_periodic(base, parse_pattern(pattern) if isinstance(pattern, str) else pattern, count)
    if source == 'seeded_uniform':
        return gen_seeded_uniform(base, config.DEFAULT_SEED if seed is None else seed, count)
    raise DigitError(f"Unknown source '{source}'. Known sources: {', '.join(SOURCES)}")


def parse_pattern(text: str) -> tuple:
    """Accepts `12` (one base-36 character per digit) or `1,2` (decimal values)."""
    text = text.strip()
    if not text:
        raise DigitError("Periodic pattern must be nonempty")
    try:
        if ',' in text:
            return tuple(int(part) for part in text.split(','))
        return tuple(int(char, 36) for char in text)
    except ValueError:
        raise DigitError(f"Cannot parse pattern '{text}'") from None


def champernowne_prefix_length(base: int, m: int) -> int:
    """Number of digits taken by all integers with at most m base-b digits."""
    return sum(j * (base ** j - base ** (j - 1)) for j in range(1, m + 1))


def _limit(count, produced, size):
    return size if count is None else min(size, count - produced)


def _champernowne_chunks(base, count, size):
    produced = 0
    width = 1
    while count is None or produced < count:
        if base ** width > 2 ** 62:
            raise DigitError("Champernowne stream exceeds 64-bit integer range")
        powers = base ** np.arange(width - 1, -1, -1, dtype=np.int64)
        start = base ** (width - 1)
        stop = base ** width
        skip = 0  # digits of `start` already emitted by the previous chunk
        while start < stop:
            want = _limit(count, produced, size)
            if want <= 0:
                return
            end = min(stop, start + -(-(skip + want) // width))
            numbers = np.arange(start, end, dtype=np.int64)
            digits = ((numbers[:, None] // powers) % base).reshape(-1)[skip:skip + want]
            produced += len(digits)
            yield digits
            done, skip = divmod(skip + len(digits), width)
            start += done
        width += 1


def _periodic_chunks(pattern, count, size):
    cycle = np.asarray(pattern, dtype=np.int64)
    produced = 0
    while count is None or produced < count:
        n = _limit(count, produced, size)
        yield cycle[np.arange(produced, produced + n) % len(cycle)]
        produced += n


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = (x ^ (x >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _seeded_chunks(base, seed, count, size):
    produced = 0
    seed = np.uint64(seed)
    modulus = np.uint64(base)
    with np.errstate(over='ignore'):
        while count is None or produced < count:
            n = _limit(count, produced, size)
            counters = np.arange(produced + 1, produced + n + 1, dtype=np.uint64)
            z = _splitmix64(seed + counters * _GAMMA)
            yield (z % modulus).astype(np.int64)
            produced += n


# --- Digit files ---

def _parse_header(first_line: str, path):
    """Returns (base, header_present)."""
    if first_line.startswith('#'):
        match = _HEADER_RE.match(first_line.rstrip('\r\n'))
        if not match:
            raise DigitFileError("malformed header, expected '# base=<b>'", path, 1)
        base = int(match.group(1))
        if base < 2:
            raise DigitFileError(f"header base must be >= 2, got {base}", path, 1)
        return base, True
    return config.DEFAULT_BASE, False


def _parse_packed_line(line: str, lineno: int, base: int, path) -> np.ndarray:
    text = line.rstrip('\r\n')
    try:
        raw = np.frombuffer(text.encode('ascii'), dtype=np.uint8)
    except UnicodeEncodeError:
        bad = next(i for i, c in enumerate(text) if ord(c) > 127)
        raise DigitFileError(f"illegal character {text[bad]!r}", path, lineno, bad + 1) from None
    values = _CHAR_TO_DIGIT[raw]
    bad = np.nonzero((values < 0) | (values >= base))[0]
    if bad.size:
        i = int(bad[0])
        reason = "illegal character" if values[i] < 0 else f"digit >= base {base}"
        raise DigitFileError(f"{reason}: {text[i]!r}", path, lineno, i + 1)
    return values


def _parse_comma_line(line: str, lineno: int, base: int, path) -> np.ndarray:
    text = line.strip()
    if not text:
        return np.zeros(0, dtype=np.int64)
    tokens = text.split(',')
    if tokens[-1] == '':
        tokens.pop()
    values = []
    column = 1
    for token in tokens:
        stripped = token.strip()
        if not stripped.isdigit():
            raise DigitFileError(f"illegal value {token!r}", path, lineno, column)
        value = int(stripped)
        if value >= base:
            raise DigitFileError(f"digit {value} >= base {base}", path, lineno, column)
        values.append(value)
        column += len(token) + 1
    return np.asarray(values, dtype=np.int64)


def _iter_file_values(path):
    """Yields (base, array-per-line); the base is the first item yielded."""
    with open(path, 'r', encoding='ascii', errors='surrogateescape') as f:
        first = f.readline()
        base, has_header = _parse_header(first, path)
        yield base
        parse = _parse_packed_line if base <= PACKED_MAX_BASE else _parse_comma_line
        lineno = 1
        if not has_header and first:
            yield parse(first, lineno, base, path)
        for line in f:
            lineno += 1
            yield parse(line, lineno, base, path)


def _file_chunks(path, size):
    lines = _iter_file_values(path)
    next(lines)
    pending = []
    pending_len = 0
    for values in lines:
        if not values.size:
            continue
        pending.append(values)
        pending_len += values.size
        if pending_len >= size:
            merged = np.concatenate(pending)
            for i in range(0, merged.size - merged.size % size, size):
                yield merged[i:i + size]
            rest = merged[merged.size - merged.size % size:]
            pending = [rest] if rest.size else []
            pending_len = rest.size
    if pending_len:
        yield np.concatenate(pending)


def read_digit_file(path) -> DigitStream:
    """
    Validates the whole file once (streaming) and returns a file-backed stream.
    Iterating the stream re-reads the file.
    """
    lines = _iter_file_values(path)
    base = next(lines)
    length = sum(values.size for values in lines)
    return DigitStream(base=base, source='file', length=length, path=str(path))


def write_digit_file(stream: DigitStream, path) -> int:
    """Writes header plus body; returns the number of digits written."""
    if not stream.finite:
        raise DigitError("Cannot write an unbounded stream")
    path = ensure_parent(path)
    written = 0
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        f.write(f"# base={stream.base}\n")
        if stream.base <= PACKED_MAX_BASE:
            width = config.FILE_LINE_WIDTH
            carry = ''
            for chunk in stream.chunks():
                text = carry + _DIGIT_TO_CHAR[chunk].tobytes().decode('ascii')
                full = len(text) - len(text) % width
                for i in range(0, full, width):
                    f.write(text[i:i + width] + '\n')
                carry = text[full:]
                written += len(chunk)
            if carry:
                f.write(carry + '\n')
        else:
            per_line = config.FILE_VALUES_PER_LINE
            line = []
            first_line = True
            for chunk in stream.chunks():
                for value in chunk.tolist():
                    line.append(str(value))
                    if len(line) == per_line:
                        f.write(('' if first_line else ',\n') + ','.join(line))
                        first_line = False
                        line = []
                written += len(chunk)
            if line:
                f.write(('' if first_line else ',\n') + ','.join(line))
                first_line = False
            if not first_line:
                f.write('\n')
    return written
