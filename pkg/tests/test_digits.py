# tests/test_digits.py
import numpy as np
import pytest

from src.digits import (
    DigitError, DigitFileError, DigitStream, champernowne_prefix_length, gen_champernowne, gen_constant,
    gen_periodic, gen_seeded_uniform, open_stream, parse_pattern, read_digit_file, write_digit_file,
)
from src.stats import binomial_bound
from tests.fixtures import DESK_COUNT, PROPERTY_CASES, SPLITMIX64_SEED0_FIRST


def test_champernowne_base10_prefix():
    digits = gen_champernowne(10, 15).to_array().tolist()
    assert digits == [1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 0, 1, 1, 1, 2]


def test_champernowne_base2_prefix():
    # 1 10 11 100 101
    assert gen_champernowne(2, 11).to_array().tolist() == [1, 1, 0, 1, 1, 1, 0, 0, 1, 0, 1]


def test_champernowne_crosses_digit_widths():
    start = champernowne_prefix_length(10, 2)
    assert start == 189
    digits = gen_champernowne(10, start + 3).to_array()
    assert digits[start - 2:].tolist() == [9, 9, 1, 0, 0]


def naive_champernowne(base, count):
    text = []
    n, total = 1, 0
    while total < count:
        digits = np.base_repr(n, base)
        text.append(digits)
        total += len(digits)
        n += 1
    return np.array([int(c, 36) for c in ''.join(text)[:count]], dtype=np.int64)


def test_champernowne_chunks_split_numbers():
    # chunk boundaries fall inside 12, 20 and 21
    pieces = list(gen_champernowne(3, 12).chunks(5))
    assert np.concatenate(pieces).tolist() == [1, 2, 1, 0, 1, 1, 1, 2, 2, 0, 2, 1]


def test_champernowne_matches_concatenation_past_first_chunk():
    # the default chunk size is not a multiple of 5, so chunks end inside five-digit numbers
    count = 200_000
    assert np.array_equal(gen_champernowne(10, count).to_array(), naive_champernowne(10, count))
    assert np.array_equal(gen_champernowne(7, 5000).to_array(), naive_champernowne(7, 5000))


@pytest.mark.parametrize("size", [1, 7, 64, 1000])
def test_chunking_does_not_change_digits(size):
    for stream in (gen_champernowne(10, 2000), gen_champernowne(3, 777), gen_seeded_uniform(7, 5, 999),
                   gen_periodic(10, (3, 1, 4), 100)):
        pieces = list(stream.chunks(size))
        assert all(len(p) <= size for p in pieces)
        assert np.array_equal(np.concatenate(pieces), stream.to_array())


def test_stream_restarts():
    stream = gen_champernowne(10, 50)
    assert list(stream) == list(stream)


def test_unbounded_stream_can_be_pulled():
    first = next(gen_champernowne(10).chunks(size=5))
    assert first.tolist() == [1, 2, 3, 4, 5]
    with pytest.raises(TypeError):
        len(gen_constant(10, 3))


def test_constant_and_periodic():
    assert gen_constant(10, 7, 5).to_array().tolist() == [7] * 5
    assert gen_periodic(10, parse_pattern('12'), 6).to_array().tolist() == [1, 2, 1, 2, 1, 2]
    assert parse_pattern('11,0') == (11, 0)
    with pytest.raises(DigitError):
        gen_periodic(10, ())
    with pytest.raises(DigitError):
        gen_periodic(2, (0, 2))


def test_bad_base_or_digit():
    with pytest.raises(DigitError):
        gen_champernowne(1, 10)
    with pytest.raises(DigitError):
        gen_constant(10, 10, 5)
    with pytest.raises(DigitError):
        gen_seeded_uniform(10, 1, -1)


def test_seeded_uniform_is_splitmix64():
    assert gen_seeded_uniform(256, 0, 1).to_array().tolist() == [SPLITMIX64_SEED0_FIRST % 256]
    assert gen_seeded_uniform(16, 0, 1).to_array().tolist() == [SPLITMIX64_SEED0_FIRST % 16]


def test_seeded_uniform_deterministic():
    a = gen_seeded_uniform(10, 42, 10_000).to_array()
    b = gen_seeded_uniform(10, 42, 10_000).to_array()
    c = gen_seeded_uniform(10, 43, 10_000).to_array()
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0 and a.max() <= 9
    counts = np.bincount(a, minlength=10) / len(a)
    assert np.all(np.abs(counts - 0.1) < 0.02)


@pytest.mark.slow
@pytest.mark.parametrize("base", [2, 10])
def test_seeded_uniform_digit_frequencies(base):
    digits = gen_seeded_uniform(base, 2718, DESK_COUNT).to_array()
    frequencies = np.bincount(digits, minlength=base) / DESK_COUNT
    assert np.all(np.abs(frequencies - 1 / base) < binomial_bound(1 / base, DESK_COUNT))


def test_file_round_trip_packed(tmp_path):
    stream = gen_champernowne(10, 1000)
    path = tmp_path / 'c.digits'
    assert write_digit_file(stream, path) == 1000
    lines = path.read_text().splitlines()
    assert lines[0] == '# base=10'
    assert all(len(line) == 80 for line in lines[1:-1])
    back = read_digit_file(path)
    assert back.base == 10 and len(back) == 1000
    assert np.array_equal(back.to_array(), stream.to_array())


def test_file_round_trip_comma(tmp_path):
    stream = gen_seeded_uniform(40, 7, 100)
    path = tmp_path / 'u.digits'
    write_digit_file(stream, path)
    text = path.read_text()
    assert text.startswith('# base=40\n')
    assert ',\n' in text
    assert np.array_equal(read_digit_file(path).to_array(), stream.to_array())


def test_file_without_header_is_base_10(tmp_path):
    path = tmp_path / 'plain.digits'
    path.write_text('0123\n4567\n')
    stream = read_digit_file(path)
    assert stream.base == 10
    assert stream.to_array().tolist() == [0, 1, 2, 3, 4, 5, 6, 7]


def test_file_errors_carry_position(tmp_path):
    path = tmp_path / 'bad.digits'
    path.write_text('# base=2\n0101\n01x1\n')
    with pytest.raises(DigitFileError) as e:
        read_digit_file(path)
    assert (e.value.line, e.value.offset) == (3, 3)

    path.write_text('# base=2\n0121\n')
    with pytest.raises(DigitFileError) as e:
        read_digit_file(path)
    assert (e.value.line, e.value.offset) == (2, 3)

    path.write_text('# base=40\n1,2,\n39,40\n')
    with pytest.raises(DigitFileError) as e:
        read_digit_file(path)
    assert e.value.line == 3

    path.write_text('# bass=10\n123\n')
    with pytest.raises(DigitFileError):
        read_digit_file(path)


def test_empty_file(tmp_path):
    path = tmp_path / 'empty.digits'
    path.write_text('')
    stream = read_digit_file(path)
    assert len(stream) == 0
    assert stream.to_array().size == 0


def test_cannot_write_unbounded(tmp_path):
    with pytest.raises(DigitError):
        write_digit_file(gen_champernowne(10), tmp_path / 'x.digits')


def test_open_stream(tmp_path):
    assert open_stream('periodic', base=10, count=4, pattern='12').to_array().tolist() == [1, 2, 1, 2]
    assert open_stream('constant', count=3, digit=4).base == 10
    path = tmp_path / 'in.digits'
    write_digit_file(gen_champernowne(2, 40), path)
    assert len(open_stream('file', path=path, count=10)) == 10
    with pytest.raises(DigitError):
        open_stream('file', base=10, path=path)
    with pytest.raises(DigitError):
        open_stream('pi', count=10)


def test_file_round_trip_random(tmp_path):
    rng = np.random.default_rng(2024)
    path = tmp_path / 'r.digits'
    for _ in range(PROPERTY_CASES):
        base = int(rng.choice([2, 3, 10, 16, 36, 37, 100]))
        digits = rng.integers(0, base, size=int(rng.integers(0, 300)))
        write_digit_file(DigitStream.from_digits(base, digits), path)
        back = read_digit_file(path)
        assert back.base == base
        assert np.array_equal(back.to_array(), digits)
