"""
One-pass selection rules.

Every rule is a small stateful transducer: `scan(chunk, start)` receives the
next chunk of digits (1-based position of its first digit is `start`) and
returns the selected positions together with the selected digits. Positions
are 1-based throughout, matching the a_1 a_2 a_3 ... indexing.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from src import config
from src.digits import DigitStream
from src.utils import ValidationError, ensure_parent, parse_params, require_keys


class RuleError(ValidationError):
    pass


class DfaFileError(RuleError):
    pass


@dataclass(frozen=True)
class PrefixDFA:
    """Total DFA over digits; `transitions[state][digit]` is the successor."""
    transitions: tuple
    start: int = 0
    accepting: frozenset = frozenset()

    def __post_init__(self):
        n = len(self.transitions)
        if n == 0:
            raise RuleError("DFA needs at least one state")
        widths = {len(row) for row in self.transitions}
        if len(widths) != 1 or widths == {0}:
            raise RuleError("DFA transition table must give one successor per digit for every state")
        for state, row in enumerate(self.transitions):
            for digit, target in enumerate(row):
                if not 0 <= target < n:
                    raise RuleError(f"DFA transition ({state}, {digit}) -> {target} leaves the state set")
        if not 0 <= self.start < n:
            raise RuleError(f"DFA start state {self.start} out of range")
        if any(not 0 <= s < n for s in self.accepting):
            raise RuleError("DFA accepting states out of range")

    @property
    def base(self) -> int:
        return len(self.transitions[0])

    @property
    def n_states(self) -> int:
        return len(self.transitions)

    def run(self, digits) -> int:
        state = self.start
        for d in digits:
            state = self.transitions[state][d]
        return state

    def accepts(self, digits) -> bool:
        return self.run(digits) in self.accepting


def arithmetic_dfa(k: int, m: int, base: int) -> PrefixDFA:
    """
    Prefix DFA selecting exactly n = k, k+m, k+2m, ...

    States 0..k-2 count the first k-1 digits; states k-1..k+m-2 form an m-cycle
    whose entry state k-1 is accepting. For k <= m this collapses (up to
    relabelling) to the m-state counter accepting residue k-1.
    """
    if k < 1 or m < 1:
        raise RuleError("arithmetic DFA needs k >= 1 and m >= 1")
    last = k + m - 2
    rows = []
    for state in range(last + 1):
        successor = state + 1 if state < last else k - 1
        rows.append((successor,) * base)
    return PrefixDFA(transitions=tuple(rows), start=0, accepting=frozenset({k - 1}))


def read_dfa_file(path) -> PrefixDFA:
    """
    DFA file: `states=<n> start=<id>`, then `accepting=<ids>` (comma separated,
    may be empty), then one line per state with its digit-indexed successors.
    """
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line.strip() for line in f if line.strip() and not line.lstrip().startswith('#')]
    if len(lines) < 2:
        raise DfaFileError(f"{path}: expected a header line and an accepting line")
    try:
        header = dict(token.split('=', 1) for token in lines[0].split())
        n_states = int(header['states'])
        start = int(header.get('start', 0))
        key, _, accepting_text = lines[1].partition('=')
        if key.strip() != 'accepting':
            raise DfaFileError(f"{path}: line 2 must be accepting=<ids>")
        accepting = frozenset(int(s) for s in accepting_text.split(',') if s.strip())
        rows = tuple(tuple(int(v) for v in line.split()) for line in lines[2:])
    except (KeyError, ValueError) as e:
        raise DfaFileError(f"{path}: cannot parse DFA file ({e})") from None
    if len(rows) != n_states:
        raise DfaFileError(f"{path}: header declares {n_states} states but {len(rows)} transition lines follow")
    try:
        return PrefixDFA(transitions=rows, start=start, accepting=accepting)
    except RuleError as e:
        raise DfaFileError(f"{path}: {e}") from None


def write_dfa_file(dfa: PrefixDFA, path):
    path = ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"states={dfa.n_states} start={dfa.start}\n")
        f.write("accepting=" + ','.join(str(s) for s in sorted(dfa.accepting)) + "\n")
        for row in dfa.transitions:
            f.write(' '.join(str(v) for v in row) + "\n")


_EMPTY = np.zeros(0, dtype=np.int64)


class SelectionRule(ABC):
    kind = ''
    lookahead = 0

    def __init__(self, input_base: int):
        if input_base < 2:
            raise RuleError(f"Input base must be >= 2, got {input_base}")
        self.input_base = input_base
        self.reset()

    @property
    def output_base(self) -> int:
        return self.input_base

    def reset(self):
        """Returns the rule to its state before the first digit."""

    @abstractmethod
    def scan(self, chunk: np.ndarray, start: int):
        """Returns (positions, digits) selected so far that were not returned before."""

    def finish(self):
        return _EMPTY, _EMPTY

    def descriptor(self) -> str:
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor()}, base={self.input_base})"


class ArithmeticRule(SelectionRule):
    """n is selected iff n = k + t*m for some t >= 0 (Wall)."""
    kind = 'arithmetic'

    def __init__(self, input_base: int, k: int = 1, m: int = 1):
        if k < 1 or m < 1:
            raise RuleError(f"arithmetic rule needs k >= 1 and m >= 1, got k={k}, m={m}")
        self.k, self.m = k, m
        super().__init__(input_base)

    def scan(self, chunk, start):
        end = start + len(chunk)
        first = max(start, self.k)
        first += (self.k - first) % self.m
        positions = np.arange(first, end, self.m, dtype=np.int64)
        return positions, chunk[positions - start]

    def descriptor(self):
        return f"arithmetic:k={self.k},m={self.m}"


class LeapRule(SelectionRule):
    """n_{i+1} = n_i + 1 + a_{n_i}."""
    kind = 'leap'

    def __init__(self, input_base: int, n1: int = 1):
        if n1 < 1:
            raise RuleError(f"leap rule needs n1 >= 1, got {n1}")
        self.n1 = n1
        super().__init__(input_base)

    def reset(self):
        self._next = self.n1

    def scan(self, chunk, start):
        end = start + len(chunk)
        digits = chunk.tolist()
        positions = []
        selected = []
        n = self._next
        while n < end:
            d = digits[n - start]
            positions.append(n)
            selected.append(d)
            n += 1 + d
        self._next = n
        return np.asarray(positions, dtype=np.int64), np.asarray(selected, dtype=np.int64)

    def descriptor(self):
        return f"leap:n1={self.n1}"


class RemoveTopRule(SelectionRule):
    """Keeps digits < b-1 and reads them in base b-1."""
    kind = 'remove_top'

    def __init__(self, input_base: int):
        if input_base < 3:
            raise RuleError(f"remove_top needs input base >= 3 (output base {input_base - 1} is meaningless)")
        super().__init__(input_base)

    @property
    def output_base(self):
        return self.input_base - 1

    def scan(self, chunk, start):
        hits = np.nonzero(chunk < self.input_base - 1)[0]
        return hits.astype(np.int64) + start, chunk[hits]


class ModuloRule(SelectionRule):
    """n is selected iff a_1 + ... + a_n = L (mod N)."""
    kind = 'modulo'

    def __init__(self, input_base: int, L: int = 0, N: int = 2):
        if N < 2 or not 0 <= L < N:
            raise RuleError(f"modulo rule needs N >= 2 and 0 <= L < N, got L={L}, N={N}")
        self.L, self.N = L, N
        super().__init__(input_base)

    def reset(self):
        self._residue = 0

    def scan(self, chunk, start):
        if not len(chunk):
            return _EMPTY, _EMPTY
        residues = (self._residue + np.cumsum(chunk % self.N)) % self.N
        self._residue = int(residues[-1])
        hits = np.nonzero(residues == self.L)[0]
        return hits.astype(np.int64) + start, chunk[hits]

    def descriptor(self):
        return f"modulo:L={self.L},N={self.N}"


class DfaPrefixRule(SelectionRule):
    """n is selected iff the DFA accepts a_1 ... a_{n-1}."""
    kind = 'dfa_prefix'

    def __init__(self, input_base: int, dfa: PrefixDFA, source: Optional[str] = None):
        if dfa.base != input_base:
            raise RuleError(f"DFA reads base {dfa.base} digits but the stream is base {input_base}")
        self.dfa = dfa
        self.source = source
        super().__init__(input_base)

    def reset(self):
        self._state = self.dfa.start

    def scan(self, chunk, start):
        table = self.dfa.transitions
        accepting = self.dfa.accepting
        state = self._state
        hits = []
        for i, d in enumerate(chunk.tolist()):
            if state in accepting:
                hits.append(i)
            state = table[state][d]
        self._state = state
        hits = np.asarray(hits, dtype=np.int64)
        return hits + start, chunk[hits]

    def descriptor(self):
        return f"dfa:{self.source}" if self.source else 'dfa:<in-memory>'


class TwoSidedZeroRule(SelectionRule):
    """
    n >= 2 is selected iff a_{n-1} = 0 and a_{n+1} = 0 (base 2).
    Needs one digit of lookahead; the final position is never selected.
    """
    kind = 'two_sided_zero'
    lookahead = 1

    def __init__(self, input_base: int = 2):
        if input_base != 2:
            raise RuleError(f"two_sided_zero is defined for base 2, got base {input_base}")
        super().__init__(input_base)

    def reset(self):
        self._tail = _EMPTY

    def scan(self, chunk, start):
        buffer = np.concatenate([self._tail, chunk]) if len(self._tail) else chunk
        buffer_start = start - len(self._tail)
        self._tail = buffer[-2:].copy()
        if len(buffer) < 3:
            return _EMPTY, _EMPTY
        centers = np.nonzero((buffer[:-2] == 0) & (buffer[2:] == 0))[0] + 1
        return centers.astype(np.int64) + buffer_start, buffer[centers]


RULE_KINDS = {
    'arithmetic': ArithmeticRule,
    'leap': LeapRule,
    'remove_top': RemoveTopRule,
    'modulo': ModuloRule,
    'dfa': DfaPrefixRule,
    'two_sided_zero': TwoSidedZeroRule,
}


def rule_arithmetic(k: int, m: int, input_base: int = config.DEFAULT_BASE) -> ArithmeticRule:
    return ArithmeticRule(input_base, k=k, m=m)


def rule_leap(n1: int = 1, input_base: int = config.DEFAULT_BASE) -> LeapRule:
    return LeapRule(input_base, n1=n1)


def rule_remove_top(input_base: int = config.DEFAULT_BASE) -> RemoveTopRule:
    return RemoveTopRule(input_base)


def rule_modulo(L: int, N: int, input_base: int = config.DEFAULT_BASE) -> ModuloRule:
    return ModuloRule(input_base, L=L, N=N)


def rule_dfa_prefix(dfa: PrefixDFA, source: Optional[str] = None) -> DfaPrefixRule:
    return DfaPrefixRule(dfa.base, dfa, source=source)


def rule_two_sided_zero(input_base: int = 2) -> TwoSidedZeroRule:
    return TwoSidedZeroRule(input_base)


def parse_rule(descriptor: str, input_base: int) -> SelectionRule:
    """
    Grammar: `arithmetic:k=<int>,m=<int>`, `leap:n1=<int>`, `remove_top`,
    `modulo:L=<int>,N=<int>`, `dfa:<path>`, `two_sided_zero`.
    """
    name, _, rest = descriptor.strip().partition(':')
    name = name.strip()
    if name not in RULE_KINDS:
        raise RuleError(f"Unknown rule '{name}'. Known rules: {', '.join(RULE_KINDS)}")
    if name == 'dfa':
        if not rest:
            raise RuleError("dfa rule needs a file path: dfa:<path>")
        try:
            dfa = read_dfa_file(rest)
        except OSError as e:
            raise DfaFileError(f"Cannot read DFA file {rest}: {e}") from None
        return DfaPrefixRule(input_base, dfa, source=rest)
    keys = {'arithmetic': ('k', 'm'), 'leap': ('n1',), 'modulo': ('L', 'N')}.get(name, ())
    try:
        params = parse_params(rest)
        if params or name in ('arithmetic', 'modulo'):
            require_keys(params, keys, f"{name} rule")
    except RuleError:
        raise
    except ValidationError as e:
        raise RuleError(str(e)) from None
    return RULE_KINDS[name](input_base, **params)


def expected_density(rule: SelectionRule) -> Optional[Fraction]:
    """Limiting share of selected positions on a normal (or i.i.d. uniform) input."""
    b = rule.input_base
    if isinstance(rule, ArithmeticRule):
        return Fraction(1, rule.m)
    if isinstance(rule, LeapRule):
        return Fraction(2, b + 1)
    if isinstance(rule, RemoveTopRule):
        return Fraction(b - 1, b)
    if isinstance(rule, ModuloRule):
        return Fraction(1, rule.N)
    if isinstance(rule, TwoSidedZeroRule):
        return Fraction(1, 4)
    return None


@dataclass
class Selection:
    indices: np.ndarray  # 1-based positions n_1 < n_2 < ...
    output: DigitStream
    input_positions_scanned: int

    @property
    def count(self) -> int:
        return int(len(self.indices))

    @property
    def density(self) -> float:
        if not self.input_positions_scanned:
            return 0.0
        return self.count / self.input_positions_scanned


def select(rule: SelectionRule, stream: DigitStream) -> Selection:
    """Runs the rule over the stream in one pass."""
    if stream.base != rule.input_base:
        raise RuleError(f"Rule {rule.descriptor()} expects base {rule.input_base}, stream is base {stream.base}")
    if not stream.finite:
        raise RuleError("select needs a finite stream")
    rule.reset()
    positions = []
    digits = []
    start = 1
    for chunk in stream.chunks():
        p, d = rule.scan(chunk, start)
        positions.append(p)
        digits.append(d)
        start += len(chunk)
    p, d = rule.finish()
    positions.append(p)
    digits.append(d)
    indices = np.concatenate(positions).astype(np.int64)
    output = DigitStream.from_digits(rule.output_base, np.concatenate(digits))
    return Selection(indices=indices, output=output, input_positions_scanned=start - 1)


def write_index_file(indices, path):
    path = ensure_parent(path)
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        for block in range(0, len(indices), config.CHUNK_SIZE):
            part = indices[block:block + config.CHUNK_SIZE]
            f.write(''.join(f"{n}\n" for n in part.tolist()))


def read_index_file(path) -> np.ndarray:
    with open(path, 'r', encoding='ascii') as f:
        values = [int(line) for line in f if line.strip()]
    return np.asarray(values, dtype=np.int64)
