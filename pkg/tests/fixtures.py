# tests/fixtures.py
# Oracle values the tests compare against.

# two_sided_zero on fair i.i.d. bits: exact stationary frequencies of the
# output, from the Markov chain over (last selected digit, lookahead state).
TWO_SIDED_ZERO_PAIRS = {'00': 3 / 10, '01': 1 / 5, '10': 1 / 5, '11': 3 / 10}
TWO_SIDED_ZERO_DIGITS = {'0': 1 / 2, '1': 1 / 2}

# 0.999 quantile of chi-square with 3 degrees of freedom (base 2, j = 2).
CHI2_3DOF_999 = 16.266

# Base-10 Champernowne at 10^6 digits is dominated by the six-digit numbers
# 100000..185184, which push digit 1 to about 0.179. Bounds for the input
# and for each rule output on that prefix. Leap locks onto the number layout
# and has the largest pair deviation of the four (about 0.118; single digits
# about 0.078).
CHAMPERNOWNE_COUNT = 10 ** 6
CHAMPERNOWNE_BOUNDS = {1: 0.12, 2: 0.05}
CHAMPERNOWNE_OUTPUT_BOUNDS = {
    'arithmetic': {1: 0.15, 2: 0.06},
    'leap': {1: 0.12, 2: 0.15},
    'remove_top': {1: 0.15, 2: 0.06},
    'modulo': {1: 0.15, 2: 0.06},
}
LEAP_CHAMPERNOWNE_PAIR_DEVIATION = 0.118

# First SplitMix64 output for seed 0 (state advanced once by the golden gamma).
SPLITMIX64_SEED0_FIRST = 0xE220A8397B1DCDAF

DESK_COUNT = 10 ** 6
PROPERTY_CASES = 1000
