"""
Block-frequency censuses and normality diagnostics.

Counts are exact integers; floating point only appears at the final
division when a report is produced.
"""
import itertools
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import pandas as pd
from scipy.stats import chi2

from src import config
from src.automata import AutomatonRun, expected_ratio, visit_ratio
from src.digits import ALPHABET, PACKED_MAX_BASE, DigitStream
from src.rules import Selection
from src.schemas import BlockLengthStats, CrossCheckReport, CrossCheckRow, NormalityReport
from src.utils import ValidationError


class EmptyStreamError(ValidationError):
    pass


def block_code(block, base: int) -> int:
    code = 0
    for d in block:
        code = code * base + int(d)
    return code


def block_of(code: int, length: int, base: int) -> tuple:
    digits = []
    for _ in range(length):
        code, d = divmod(code, base)
        digits.append(d)
    return tuple(reversed(digits))


def block_text(block, base: int) -> str:
    if base <= PACKED_MAX_BASE:
        return ''.join(ALPHABET[d] for d in block)
    return ','.join(str(d) for d in block)


@dataclass
class BlockCensus:
    base: int
    kmax: int
    counts: dict = field(default_factory=dict)  # length j -> Counter(block code -> count)
    positions: int = 0
    head: tuple = ()  # first kmax-1 digits seen
    tail: tuple = ()  # last kmax-1 digits seen

    def __post_init__(self):
        if self.kmax < 1:
            raise ValidationError(f"kmax must be >= 1, got {self.kmax}")
        if self.base ** self.kmax >= 2 ** 62:
            raise ValidationError(f"blocks of length {self.kmax} in base {self.base} do not fit 64-bit codes")
        for j in range(1, self.kmax + 1):
            self.counts.setdefault(j, Counter())

    def count(self, block) -> int:
        return self.counts[len(block)][block_code(block, self.base)]

    def block_counts(self, j: int) -> dict:
        """{block tuple: count} for the observed blocks of length j."""
        return {block_of(code, j, self.base): c for code, c in self.counts[j].items()}

    def windows(self, j: int) -> int:
        return max(self.positions - j + 1, 0)

    def update(self, chunk: np.ndarray):
        """Adds the next chunk, counting blocks that straddle the previous one."""
        chunk = np.asarray(chunk, dtype=np.int64)
        if not chunk.size:
            return
        carry = len(self.tail)
        buffer = np.concatenate([np.asarray(self.tail, dtype=np.int64), chunk]) if carry else chunk
        for j in range(1, self.kmax + 1):
            first = max(0, carry - j + 1)
            n = len(buffer) - j + 1 - first
            if n <= 0:
                continue
            codes = np.zeros(n, dtype=np.int64)
            for t in range(j):
                codes = codes * self.base + buffer[first + t:first + t + n]
            if self.base ** j <= config.DENSE_BLOCK_LIMIT:
                dense = np.bincount(codes, minlength=self.base ** j)
                nonzero = np.nonzero(dense)[0]
                self.counts[j].update(dict(zip(nonzero.tolist(), dense[nonzero].tolist())))
            else:
                values, counts = np.unique(codes, return_counts=True)
                self.counts[j].update(dict(zip(values.tolist(), counts.tolist())))
        self.positions += len(chunk)
        keep = self.kmax - 1
        if keep:
            if len(self.head) < keep:
                self.head = self.head + tuple(chunk[:keep - len(self.head)].tolist())
            self.tail = tuple(buffer[-keep:].tolist())


def census(stream: DigitStream, kmax: int = config.DEFAULT_KMAX) -> BlockCensus:
    """Counts every overlapping block of length 1..kmax exactly once."""
    if not stream.finite:
        raise ValidationError("census needs a finite stream")
    result = BlockCensus(base=stream.base, kmax=kmax)
    for chunk in stream.chunks():
        result.update(chunk)
    return result


def merge(c1: BlockCensus, c2: BlockCensus, seam_digits=None) -> BlockCensus:
    """
    Census of the concatenation of c1's and c2's chunks. `seam_digits` are the
    last kmax-1 digits of the first chunk followed by the first kmax-1 of the
    second; by default they come from the censuses themselves.
    """
    if (c1.base, c1.kmax) != (c2.base, c2.kmax):
        raise ValidationError("can only merge censuses with the same base and kmax")
    keep = c1.kmax - 1
    left = min(keep, c1.positions)
    right = min(keep, c2.positions)
    seam = tuple(c1.tail) + tuple(c2.head) if seam_digits is None else tuple(int(d) for d in seam_digits)
    if len(seam) != left + right:
        raise ValidationError(f"seam must hold {left} + {right} digits, got {len(seam)}")
    merged = BlockCensus(base=c1.base, kmax=c1.kmax, positions=c1.positions + c2.positions)
    for j in range(1, c1.kmax + 1):
        merged.counts[j].update(c1.counts[j])
        merged.counts[j].update(c2.counts[j])
        for s in range(left):
            end = s + j - 1
            if left <= end < len(seam):
                merged.counts[j][block_code(seam[s:s + j], c1.base)] += 1
    if keep:
        merged.head = (tuple(c1.head) + tuple(c2.head))[:keep]
        merged.tail = (tuple(c1.tail) + tuple(c2.tail))[-keep:]
    return merged


def marginal_check(c: BlockCensus, j: int) -> bool:
    """counts[s] == sum_d counts[s+d] + (1 if s is the final j-block)."""
    if not 1 <= j < c.kmax:
        raise ValidationError(f"marginal check needs 1 <= j < kmax, got j={j}")
    longer = Counter()
    for code, n in c.counts[j + 1].items():
        longer[code // c.base] += n
    if c.positions >= j:
        longer[block_code(c.tail[-j:], c.base)] += 1
    return {k: v for k, v in c.counts[j].items() if v} == {k: v for k, v in longer.items() if v}


def _windows_or_raise(c: BlockCensus, j: int) -> int:
    if not 1 <= j <= c.kmax:
        raise ValidationError(f"block length {j} outside 1..{c.kmax}")
    n = c.windows(j)
    if n == 0:
        raise EmptyStreamError("empty stream" if c.positions == 0 else f"stream shorter than block length {j}")
    return n


def chi_square(c: BlockCensus, j: int) -> float:
    """sum over all b^j blocks of (count - E)^2 / E with E = windows / b^j."""
    n = _windows_or_raise(c, j)
    cells = c.base ** j
    squares = sum(v * v for v in c.counts[j].values())
    return float(Fraction(cells * squares, n) - n)


def max_deviation(c: BlockCensus, j: int):
    """Returns (max_s |count/windows - b^-j|, worst block)."""
    n = _windows_or_raise(c, j)
    cells = c.base ** j
    worst_code, worst = None, -1
    for code, v in c.counts[j].items():
        gap = abs(v * cells - n)
        if gap > worst:
            worst_code, worst = code, gap
    if len(c.counts[j]) < cells and n > worst:
        worst_code = next(code for code in range(cells) if c.counts[j][code] == 0)
        worst = n
    return float(Fraction(worst, n * cells)), block_of(worst_code, j, c.base)


def binomial_bound(p: float, n: int, sigmas: float = 4.0) -> float:
    return float(sigmas * np.sqrt(p * (1 - p) / n))


def report(c: BlockCensus, selection: Optional[Selection] = None, thresholds: Optional[dict] = None,
           expected_density=None) -> NormalityReport:
    """Deviations, chi-squares, selection density and verdict per configured thresholds."""
    if c.positions == 0:
        raise EmptyStreamError("empty stream")
    thresholds = config.VERDICT_THRESHOLDS if thresholds is None else thresholds
    lengths = {}
    for j in range(1, c.kmax + 1):
        if c.windows(j) == 0:
            continue
        deviation, worst = max_deviation(c, j)
        statistic = chi_square(c, j)
        dof = c.base ** j - 1
        threshold = thresholds.get(j)
        lengths[j] = BlockLengthStats(
            max_deviation=deviation,
            worst_block=block_text(worst, c.base),
            chi_square=statistic,
            dof=dof,
            p_value=float(chi2.sf(statistic, dof)),
            threshold=threshold,
            passed=None if threshold is None else deviation < threshold,
        )
    judged = [s.passed for s in lengths.values() if s.passed is not None]
    if not judged:
        verdict = 'unjudged'
    elif all(judged):
        verdict = 'consistent-with-normal'
    else:
        verdict = 'non-normal'
    return NormalityReport(
        base=c.base,
        kmax=c.kmax,
        positions=c.positions,
        lengths=lengths,
        selection_count=None if selection is None else selection.count,
        selection_density=None if selection is None else selection.density,
        expected_density=None if expected_density is None else float(expected_density),
        thresholds=dict(thresholds),
        verdict=verdict,
    )


def cross_check_ratio(output_census: BlockCensus, run: AutomatonRun, k: Optional[int] = None,
                      warmup: Optional[int] = None) -> CrossCheckReport:
    """
    Compares, for every block s of length k, the frequency of s in the rule
    output with the automaton's visit ratio target(s) / selection set. The
    two differ only through the first selections, before the window is full,
    so the discrepancy is bounded by (k + warmup) / selection_count.
    """
    automaton = run.automaton
    k = automaton.params.get('k', 1) if k is None else k
    warmup = (config.WARMUP_SELECTIONS if config.WARMUP_SELECTIONS is not None else k) if warmup is None else warmup
    selections = run.census.selections
    if output_census.positions != selections:
        raise ValidationError(
            f"output census covers {output_census.positions} digits but the automaton made {selections} selections")
    if k > output_census.kmax:
        raise ValidationError(f"output census only counts blocks up to {output_census.kmax}, need {k}")
    windows = _windows_or_raise(output_census, k)
    selection_states = sorted(automaton.selection_set)
    rows = []
    worst = Fraction(0)
    for block in itertools.product(range(output_census.base), repeat=k):
        direct = Fraction(output_census.count(block), windows)
        ratio = visit_ratio(run.census, automaton.targets(block), selection_states)
        gap = abs(direct - ratio)
        worst = max(worst, gap)
        rows.append(CrossCheckRow(
            block=block_text(block, output_census.base),
            direct_frequency=float(direct),
            visit_ratio=float(ratio),
            expected_ratio=float(expected_ratio(automaton, block)),
            discrepancy=float(gap),
        ))
    bound = Fraction(k + warmup, selections)
    return CrossCheckReport(
        automaton=automaton.name,
        k=k,
        selection_count=selections,
        rows=rows,
        max_discrepancy=float(worst),
        bound=float(bound),
        within_bound=worst <= bound,
    )


def census_frame(c: BlockCensus) -> pd.DataFrame:
    """One row per observed block: length, block, count, frequency, expected."""
    records = []
    for j in range(1, c.kmax + 1):
        n = c.windows(j)
        for code in sorted(c.counts[j]):
            v = c.counts[j][code]
            if not v:
                continue
            records.append({
                'length': j,
                'block': block_text(block_of(code, j, c.base), c.base),
                'count': v,
                'frequency': v / n,
                'expected': c.base ** -j,
            })
    return pd.DataFrame.from_records(records, columns=['length', 'block', 'count', 'frequency', 'expected'])
