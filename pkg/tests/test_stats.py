# tests/test_stats.py
from collections import Counter

import numpy as np
import pytest
from scipy.stats import chi2

from src.digits import DigitStream, gen_champernowne, gen_periodic, gen_seeded_uniform
from src.rules import expected_density, rule_arithmetic, rule_leap, rule_modulo, rule_remove_top, rule_two_sided_zero, select
from src.stats import (
    BlockCensus, EmptyStreamError, binomial_bound, block_code, block_text, census, census_frame, chi_square,
    marginal_check, max_deviation, merge, report,
)
from src.utils import ValidationError
from tests.fixtures import (
    CHAMPERNOWNE_BOUNDS, CHAMPERNOWNE_COUNT, CHAMPERNOWNE_OUTPUT_BOUNDS, CHI2_3DOF_999, DESK_COUNT,
    LEAP_CHAMPERNOWNE_PAIR_DEVIATION, PROPERTY_CASES, TWO_SIDED_ZERO_DIGITS, TWO_SIDED_ZERO_PAIRS,
)

DESK_RULES = [
    lambda: rule_arithmetic(1, 2),
    lambda: rule_leap(1),
    lambda: rule_remove_top(10),
    lambda: rule_modulo(0, 3),
]
DESK_IDS = ['arithmetic', 'leap', 'remove_top', 'modulo']


def naive_counts(digits, j, base):
    return Counter(block_code(digits[i:i + j], base) for i in range(len(digits) - j + 1))


def test_small_census():
    c = census(DigitStream.from_digits(10, [1, 2, 1, 2]), kmax=2)
    assert c.count((1,)) == 2 and c.count((2,)) == 2
    assert c.count((1, 2)) == 2 and c.count((2, 1)) == 1
    assert c.windows(2) == 3


def test_census_in_pieces_matches_naive():
    rng = np.random.default_rng(11)
    for _ in range(PROPERTY_CASES):
        base = int(rng.integers(2, 6))
        kmax = int(rng.integers(1, 5))
        digits = rng.integers(0, base, size=int(rng.integers(0, 200)))
        c = BlockCensus(base=base, kmax=kmax)
        for piece in np.split(digits, np.sort(rng.integers(0, len(digits) + 1, size=int(rng.integers(0, 6))))):
            c.update(piece)
        assert c.positions == len(digits)
        for j in range(1, kmax + 1):
            assert sum(c.counts[j].values()) == max(len(digits) - j + 1, 0)
            assert +c.counts[j] == naive_counts(digits.tolist(), j, base)


def test_merge_law():
    rng = np.random.default_rng(12)
    for _ in range(PROPERTY_CASES):
        base = int(rng.integers(2, 5))
        kmax = int(rng.integers(1, 4))
        x = rng.integers(0, base, size=int(rng.integers(0, 60)))
        y = rng.integers(0, base, size=int(rng.integers(0, 60)))
        merged = merge(census(DigitStream.from_digits(base, x), kmax), census(DigitStream.from_digits(base, y), kmax))
        whole = census(DigitStream.from_digits(base, np.concatenate([x, y])), kmax)
        assert merged.positions == whole.positions
        for j in range(1, kmax + 1):
            assert +merged.counts[j] == +whole.counts[j]


def test_merge_with_explicit_seam():
    x, y = [0, 1, 1], [0, 1]
    c1 = census(DigitStream.from_digits(2, x), 3)
    c2 = census(DigitStream.from_digits(2, y), 3)
    merged = merge(c1, c2, seam_digits=[1, 1, 0, 1])
    assert +merged.counts[3] == +census(DigitStream.from_digits(2, x + y), 3).counts[3]
    with pytest.raises(ValidationError):
        merge(c1, c2, seam_digits=[1])


def test_marginal_identity():
    rng = np.random.default_rng(13)
    for _ in range(PROPERTY_CASES):
        base = int(rng.integers(2, 5))
        kmax = int(rng.integers(2, 5))
        digits = rng.integers(0, base, size=int(rng.integers(0, 100)))
        c = census(DigitStream.from_digits(base, digits), kmax)
        for j in range(1, kmax):
            assert marginal_check(c, j)


def test_marginal_check_detects_tampering():
    c = census(gen_champernowne(10, 500), 2)
    c.counts[1][3] += 1
    assert not marginal_check(c, 1)


def test_chi_square_exact():
    assert chi_square(census(DigitStream.from_digits(2, [0, 0, 1, 1]), 1), 1) == 0.0
    assert chi_square(census(DigitStream.from_digits(2, [0, 0, 0, 1]), 1), 1) == 1.0


def test_chi_square_uniform_control():
    c = census(gen_seeded_uniform(2, 31, 10 ** 5), 2)
    assert chi_square(c, 2) < CHI2_3DOF_999
    result = report(c)
    assert result.lengths[2].dof == 3
    assert result.lengths[2].p_value == pytest.approx(chi2.sf(result.lengths[2].chi_square, 3))


def test_max_deviation_periodic():
    deviation, worst = max_deviation(census(gen_periodic(10, (1, 2), 1000), 1), 1)
    assert deviation == pytest.approx(0.4)
    assert worst in ((1,), (2,))


def test_max_deviation_counts_missing_blocks():
    deviation, worst = max_deviation(census(gen_periodic(3, (0, 1), 10), 1), 1)
    # 0 and 1 are 1/2 - 1/3 off, the missing 2 is 1/3 off
    assert deviation == pytest.approx(1 / 3)
    assert worst == (2,)


def test_empty_stream():
    c = census(DigitStream.from_digits(10, []), 2)
    with pytest.raises(EmptyStreamError):
        report(c)
    with pytest.raises(EmptyStreamError):
        chi_square(c, 1)


def test_short_stream_skips_long_blocks():
    result = report(census(DigitStream.from_digits(10, [4]), 3))
    assert list(result.lengths) == [1]


def test_uniform_control_is_normal():
    result = report(census(gen_seeded_uniform(10, 5, 10 ** 5), 3))
    assert result.verdict == 'consistent-with-normal'
    assert result.lengths[3].passed is None
    assert result.lengths[1].max_deviation < 0.01


@pytest.mark.parametrize("make_rule", [None] + DESK_RULES, ids=['input'] + DESK_IDS)
def test_periodic_control_is_non_normal(make_rule):
    stream = gen_periodic(10, (1, 2), 10_000)
    if make_rule is None:
        c, floor = census(stream, 2), 0.4
    else:
        selection = select(make_rule(), stream)
        c = census(selection.output, 2)
        # base 9 output of remove_top puts the floor at 1/2 - 1/9
        floor = 0.5 - 1 / selection.output.base
    result = report(c)
    assert result.verdict == 'non-normal'
    assert result.lengths[1].max_deviation >= floor - 1e-12


def test_report_with_selection():
    stream = gen_seeded_uniform(10, 8, 50_000)
    rule = rule_leap(1)
    selection = select(rule, stream)
    result = report(census(selection.output, 2), selection=selection, expected_density=expected_density(rule))
    assert result.selection_count == selection.count
    assert result.expected_density == pytest.approx(2 / 11)
    assert abs(result.selection_density - 2 / 11) < 0.01


def test_thresholds_are_configurable():
    c = census(gen_champernowne(10, 10_000), 2)
    assert report(c, thresholds={}).verdict == 'unjudged'
    assert report(c, thresholds={1: 1.0}).verdict == 'consistent-with-normal'


def test_census_frame():
    frame = census_frame(census(DigitStream.from_digits(2, [0, 1, 1]), 2))
    assert list(frame.columns) == ['length', 'block', 'count', 'frequency', 'expected']
    assert frame[frame['length'] == 2].set_index('block')['count'].to_dict() == {'01': 1, '11': 1}


def test_block_text():
    assert block_text((1, 10, 35), 36) == '1az'
    assert block_text((1, 40), 41) == '1,40'


@pytest.mark.slow
def test_champernowne_desk_scale():
    result = report(census(gen_champernowne(10, CHAMPERNOWNE_COUNT), 2), thresholds=CHAMPERNOWNE_BOUNDS)
    assert result.verdict == 'consistent-with-normal'
    # the six-digit numbers 100000..185184 dominate this prefix
    assert result.lengths[1].worst_block == '1'
    assert result.lengths[1].max_deviation > 0.07


@pytest.mark.slow
@pytest.mark.parametrize("make_rule,name", list(zip(DESK_RULES, DESK_IDS)), ids=DESK_IDS)
def test_rules_on_champernowne(make_rule, name):
    selection = select(make_rule(), gen_champernowne(10, CHAMPERNOWNE_COUNT))
    result = report(census(selection.output, 2), thresholds=CHAMPERNOWNE_OUTPUT_BOUNDS[name])
    assert result.verdict == 'consistent-with-normal'
    if name == 'leap':
        assert result.lengths[2].max_deviation == pytest.approx(LEAP_CHAMPERNOWNE_PAIR_DEVIATION, abs=0.005)


@pytest.mark.slow
@pytest.mark.parametrize("make_rule", DESK_RULES, ids=DESK_IDS)
def test_rules_on_uniform_control(make_rule):
    rule = make_rule()
    selection = select(rule, gen_seeded_uniform(10, 2718, DESK_COUNT))
    c = census(selection.output, 2)
    result = report(c, selection=selection, expected_density=expected_density(rule))
    assert result.verdict == 'consistent-with-normal'
    assert abs(result.selection_density - result.expected_density) < 0.01
    b = selection.output.base
    for j in (1, 2):
        n = c.windows(j)
        p = b ** -j
        bound = binomial_bound(p, n)
        for code in range(b ** j):
            assert abs(c.counts[j][code] / n - p) < bound


@pytest.mark.slow
def test_two_sided_zero_is_not_normality_preserving():
    stream = gen_seeded_uniform(2, 1234, DESK_COUNT)
    selection = select(rule_two_sided_zero(), stream)
    output = selection.output.to_array()
    adjacent = np.nonzero(np.diff(selection.indices) == 1)[0]
    assert adjacent.size > 0
    assert np.all(output[adjacent] == 0) and np.all(output[adjacent + 1] == 0)

    c = census(selection.output, 2)
    n = c.windows(2)
    for block, p in TWO_SIDED_ZERO_PAIRS.items():
        frequency = c.count(tuple(int(d) for d in block)) / n
        assert abs(frequency - p) < binomial_bound(p, n)
    assert c.count((0, 0)) / n - 0.25 > 0.04
    for block, p in TWO_SIDED_ZERO_DIGITS.items():
        assert abs(c.count((int(block),)) / c.windows(1) - p) < 0.01
    assert abs(selection.density - 0.25) < 0.01
