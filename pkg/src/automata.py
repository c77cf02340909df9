"""
Augmented (skew-product) automata over base-b digit streams.

A state M is paired with the base-b shift: reading digit j moves M to
delta[M][j]. The builders below produce the three systems used for the
leap, remove-top and modulo rules, and the checks verify the two hypotheses
of the transfer theorem (transitivity and measure preservation) exactly,
with `fractions.Fraction` weights. No floating point is used in this module.
"""
import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional

import numpy as np

from src import config
from src.digits import DigitStream
from src.rules import LeapRule, ModuloRule, RemoveTopRule, SelectionRule
from src.utils import ValidationError, ensure_parent


class AutomatonError(ValidationError):
    pass


class AutomatonFileError(AutomatonError):
    pass


def shift(window: tuple, digit: int) -> tuple:
    """[b_1, ..., b_k] -> [b_2, ..., b_k, digit]."""
    return window[1:] + (digit,)


@dataclass(frozen=True, eq=False)
class AugmentedAutomaton:
    name: str
    base: int
    labels: tuple
    delta: tuple  # delta[state][digit] -> state
    weights: tuple  # Fraction per state
    selection_set: frozenset
    start: int = 0
    selection_digits: Optional[frozenset] = None  # set when selection is a digit test, not a state test
    target_label: tuple = ()  # per state: the block a selected visit certifies, or None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.labels)
        if n == 0:
            raise AutomatonError("automaton needs at least one state")
        if len(self.delta) != n or len(self.weights) != n:
            raise AutomatonError("labels, delta and weights must have one entry per state")
        for state, row in enumerate(self.delta):
            if len(row) != self.base:
                raise AutomatonError(f"state {self.labels[state]} has {len(row)} transitions, expected {self.base}")
            if any(not 0 <= target < n for target in row):
                raise AutomatonError(f"state {self.labels[state]} has a transition outside the state set")
        if any(w <= 0 for w in self.weights):
            raise AutomatonError("state weights must be positive")
        if sum(self.weights, Fraction(0)) != 1:
            raise AutomatonError(f"state weights sum to {sum(self.weights, Fraction(0))}, expected 1")
        if any(not 0 <= s < n for s in self.selection_set):
            raise AutomatonError("selection set is not a subset of the states")
        if not 0 <= self.start < n:
            raise AutomatonError(f"start state {self.start} out of range")
        if self.target_label and len(self.target_label) != n:
            raise AutomatonError("target labels must cover every state")

    @property
    def n_states(self) -> int:
        return len(self.labels)

    def step(self, digit: int, state: int) -> int:
        return self.delta[state][digit]

    def simulate(self, state: int, digits) -> int:
        for d in digits:
            state = self.delta[state][d]
        return state

    def index_of(self, label) -> int:
        index = self._index().get(label)
        if index is None:
            raise AutomatonError(f"{label!r} is not a state of the {self.name} automaton")
        return index

    def _index(self):
        cache = self.__dict__.get('_label_index')
        if cache is None:
            cache = {label: i for i, label in enumerate(self.labels)}
            object.__setattr__(self, '_label_index', cache)
        return cache

    def targets(self, block) -> list:
        block = tuple(block)
        return [i for i, label in enumerate(self.target_label) if label == block]


def _uniform(n: int) -> tuple:
    return (Fraction(1, n),) * n


def _finish(name, base, labels, successor, selection, start_label, target, selection_digits=None, params=None):
    index = {label: i for i, label in enumerate(labels)}
    delta = tuple(tuple(index[successor(j, label)] for j in range(base)) for label in labels)
    return AugmentedAutomaton(
        name=name,
        base=base,
        labels=tuple(labels),
        delta=delta,
        weights=_uniform(len(labels)),
        selection_set=frozenset(index[label] for label in labels if selection(label)),
        start=index[start_label],
        selection_digits=selection_digits,
        target_label=tuple(target(label) for label in labels),
        params=params or {},
    )


def _check_bk(b, k, min_base=2):
    if b < min_base:
        raise AutomatonError(f"base must be >= {min_base}, got {b}")
    if k < 1:
        raise AutomatonError(f"block length k must be >= 1, got {k}")


@lru_cache(maxsize=64)
def build_leap_automaton(b: int, k: int) -> AugmentedAutomaton:
    """
    States (l, [b_1..b_k]) with l <= b_k. While l >= 1 the counter runs down;
    at l = 0 the next digit j is shifted into the window and becomes the new l.
    Selected states have l = b_k (a digit was just taken).
    """
    _check_bk(b, k)
    labels = [(l, w) for w in itertools.product(range(b), repeat=k) for l in range(w[-1] + 1)]

    def successor(j, label):
        l, w = label
        return (l - 1, w) if l >= 1 else (j, shift(w, j))

    automaton = _finish(
        'leap', b, labels, successor,
        selection=lambda label: label[0] == label[1][-1],
        start_label=(0, (0,) * k),
        target=lambda label: label[1] if label[0] == label[1][-1] else None,
        params={'b': b, 'k': k},
    )
    if len(automaton.selection_set) != b ** k:
        raise AutomatonError(f"leap selection set has {len(automaton.selection_set)} states, expected b^k = {b ** k}")
    return automaton


@lru_cache(maxsize=64)
def build_remove_automaton(b: int, k: int) -> AugmentedAutomaton:
    """Windows over {0..b-2}; digit b-1 leaves the window untouched and is not selected."""
    _check_bk(b, k, min_base=3)
    labels = list(itertools.product(range(b - 1), repeat=k))

    def successor(j, w):
        return shift(w, j) if j < b - 1 else w

    return _finish(
        'remove', b, labels, successor,
        selection=lambda w: True,
        start_label=(0,) * k,
        target=lambda w: w,
        selection_digits=frozenset(range(b - 1)),
        params={'b': b, 'k': k},
    )


@lru_cache(maxsize=64)
def build_modulo_automaton(b: int, k: int, N: int, L: int) -> AugmentedAutomaton:
    """
    States (l, [b_1..b_k]) with l the running digit sum mod N; the window
    shifts exactly when the new residue equals L.
    """
    _check_bk(b, k)
    if N < 2 or not 0 <= L < N:
        raise AutomatonError(f"modulo automaton needs N >= 2 and 0 <= L < N, got N={N}, L={L}")
    labels = [(l, w) for l in range(N) for w in itertools.product(range(b), repeat=k)]

    def successor(j, label):
        l, w = label
        residue = (l + j) % N
        return (residue, shift(w, j)) if residue == L else (residue, w)

    return _finish(
        'modulo', b, labels, successor,
        selection=lambda label: label[0] == L,
        start_label=(0, (0,) * k),
        target=lambda label: label[1] if label[0] == L else None,
        params={'b': b, 'k': k, 'N': N, 'L': L},
    )


BUILDERS = {
    'leap': build_leap_automaton,
    'remove': build_remove_automaton,
    'modulo': build_modulo_automaton,
}


def build_automaton(name: str, base: int, k: int, N: Optional[int] = None, L: Optional[int] = None) -> AugmentedAutomaton:
    if name not in BUILDERS:
        raise AutomatonError(f"Unknown builder '{name}'. Known builders: {', '.join(BUILDERS)}")
    if name == 'modulo':
        if N is None or L is None:
            raise AutomatonError("modulo builder needs N and L")
        return build_modulo_automaton(base, k, N, L)
    return BUILDERS[name](base, k)


def lead_in(rule: SelectionRule) -> int:
    """Digits the automaton must skip before its start state applies (leap from n1 > 1)."""
    if isinstance(rule, LeapRule):
        return rule.n1 - 1
    return 0


def automaton_for_rule(rule: SelectionRule, k: int) -> Optional[AugmentedAutomaton]:
    """
    The augmented system whose selected steps reproduce `rule`, or None.
    Run it with `skip=lead_in(rule)`.
    """
    if isinstance(rule, LeapRule):
        return build_leap_automaton(rule.input_base, k)
    if isinstance(rule, RemoveTopRule):
        return build_remove_automaton(rule.input_base, k)
    if isinstance(rule, ModuloRule):
        return build_modulo_automaton(rule.input_base, k, rule.N, rule.L)
    return None


# --- Transitivity ---

@dataclass(frozen=True)
class TraversalCertificate:
    from_state: int
    to_state: int
    string: tuple
    source: str = 'search'  # search | formula | corrected_formula
    from_label: object = None
    to_label: object = None

    def verify(self, automaton: AugmentedAutomaton) -> bool:
        return automaton.simulate(self.from_state, self.string) == self.to_state


def certify(automaton, from_state: int, to_state: int, string, source: str = 'search') -> TraversalCertificate:
    """Builds a certificate, refusing strings that do not reach `to_state`."""
    cert = TraversalCertificate(
        from_state=from_state, to_state=to_state, string=tuple(int(d) for d in string), source=source,
        from_label=automaton.labels[from_state], to_label=automaton.labels[to_state],
    )
    if not cert.verify(automaton):
        end = automaton.labels[automaton.simulate(from_state, cert.string)]
        raise AutomatonError(f"string {cert.string} drives {cert.from_label} to {end}, not {cert.to_label}")
    return cert


def _bfs(automaton, source: int):
    """Shortest-path tree from `source`; parent[s] = (previous state, digit)."""
    parent = {source: None}
    queue = deque([source])
    while queue:
        state = queue.popleft()
        for digit, nxt in enumerate(automaton.delta[state]):
            if nxt not in parent:
                parent[nxt] = (state, digit)
                queue.append(nxt)
    return parent


def _path(parent, target) -> tuple:
    digits = []
    while parent[target] is not None:
        target, digit = parent[target]
        digits.append(digit)
    return tuple(reversed(digits))


def shortest_witness(automaton, from_state: int, to_state: int) -> Optional[TraversalCertificate]:
    parent = _bfs(automaton, from_state)
    if to_state not in parent:
        return None
    return certify(automaton, from_state, to_state, _path(parent, to_state), 'search')


@dataclass
class TransitivityReport:
    transitive: bool
    unreachable_pair: Optional[tuple] = None  # (from label, to label)
    certificates: Optional[dict] = None  # (from, to) state ids -> TraversalCertificate


def check_transitivity(automaton: AugmentedAutomaton, certificates: Optional[bool] = None) -> TransitivityReport:
    """
    Transitive iff the transition graph is strongly connected. Shortest
    witnesses for every ordered pair are attached when `certificates` is true
    (default: automata with at most MAX_CERTIFICATE_STATES states).
    """
    n = automaton.n_states
    if certificates is None:
        certificates = n <= config.MAX_CERTIFICATE_STATES
    forward = _bfs(automaton, 0)
    if len(forward) < n:
        missing = next(s for s in range(n) if s not in forward)
        return TransitivityReport(False, (automaton.labels[0], automaton.labels[missing]))
    reverse_edges = [[] for _ in range(n)]
    for state, row in enumerate(automaton.delta):
        for nxt in set(row):
            reverse_edges[nxt].append(state)
    seen = {0}
    queue = deque([0])
    while queue:
        state = queue.popleft()
        for prev in reverse_edges[state]:
            if prev not in seen:
                seen.add(prev)
                queue.append(prev)
    if len(seen) < n:
        missing = next(s for s in range(n) if s not in seen)
        return TransitivityReport(False, (automaton.labels[missing], automaton.labels[0]))
    certs = None
    if certificates:
        certs = {}
        for source in range(n):
            parent = _bfs(automaton, source)
            for target in range(n):
                certs[(source, target)] = certify(automaton, source, target, _path(parent, target), 'search')
    return TransitivityReport(True, None, certs)


def traversing_string_leap(b: int, k: int, m1, m2) -> TraversalCertificate:
    """[1^l, b_1', 1^{b_1'}, b_2', ..., 1^{b_{k-1}'}, b_k', 1^{b_k' - l'}]."""
    automaton = build_leap_automaton(b, k)
    source, target = automaton.index_of(_leap_label(m1)), automaton.index_of(_leap_label(m2))
    l, _ = automaton.labels[source]
    l2, w2 = automaton.labels[target]
    string = [1] * l
    for i, c in enumerate(w2):
        string.append(c)
        if i < k - 1:
            string.extend([1] * c)
    string.extend([1] * (w2[-1] - l2))
    return certify(automaton, source, target, string, 'formula')


def traversing_string_remove(b: int, k: int, m1, m2) -> TraversalCertificate:
    """The target window itself drives any window to it."""
    automaton = build_remove_automaton(b, k)
    source, target = automaton.index_of(tuple(m1)), automaton.index_of(tuple(m2))
    return certify(automaton, source, target, automaton.labels[target], 'formula')


def _leap_label(label):
    l, w = label
    return int(l), tuple(int(d) for d in w)


def _modulo_formula(l, w2, l2, N, L, corrected: bool) -> list:
    first = (L - l - w2[0]) % N if corrected else (l - w2[0]) % N
    string = [1] * first + [w2[0]]
    for c in w2[1:]:
        string.extend([1] * ((-c) % N))
        string.append(c)
    string.extend([1] * ((l2 - L) % N))
    return string


def traversing_string_modulo(b: int, k: int, N: int, L: int, m1, m2) -> TraversalCertificate:
    """
    Tries the printed formula
        [1^{l - b_1' mod N}, b_1', 1^{-b_2' mod N}, b_2', ..., b_k', 1^{l' - L mod N}],
    then the same string with first exponent (L - l - b_1') mod N, then the
    shortest search witness. The certificate's `source` records which one held.
    """
    automaton = build_modulo_automaton(b, k, N, L)
    source, target = automaton.index_of(_leap_label(m1)), automaton.index_of(_leap_label(m2))
    l, _ = automaton.labels[source]
    l2, w2 = automaton.labels[target]
    for corrected, name in ((False, 'formula'), (True, 'corrected_formula')):
        string = _modulo_formula(l, w2, l2, N, L, corrected)
        if automaton.simulate(source, string) == target:
            return certify(automaton, source, target, string, name)
    return shortest_witness(automaton, source, target)


def audit_formula(automaton: AugmentedAutomaton) -> dict:
    """
    Checks the explicit traversing-string formula of a leap, remove or modulo
    automaton on every ordered state pair.
    """
    p = automaton.params
    sources = {'formula': 0, 'corrected_formula': 0, 'search': 0}
    failures = []
    for m1 in automaton.labels:
        for m2 in automaton.labels:
            if automaton.name == 'leap':
                cert = traversing_string_leap(p['b'], p['k'], m1, m2)
            elif automaton.name == 'remove':
                cert = traversing_string_remove(p['b'], p['k'], m1, m2)
            elif automaton.name == 'modulo':
                cert = traversing_string_modulo(p['b'], p['k'], p['N'], p['L'], m1, m2)
            else:
                raise AutomatonError(f"no traversing formula for a '{automaton.name}' automaton")
            sources[cert.source] += 1
            if cert.source != 'formula':
                failures.append((m1, m2))
    return {'pairs': automaton.n_states ** 2, 'sources': sources, 'formula_failures': failures}


def audit_modulo_formula(b: int, k: int, N: int, L: int) -> list:
    """State pairs (labels) on which the printed modulo formula does not reach its target."""
    return audit_formula(build_modulo_automaton(b, k, N, L))['formula_failures']


# --- Measure preservation ---

@dataclass
class MeasureReport:
    preserved: bool
    violating_state: object = None  # label of the first unbalanced state
    inflow: tuple = ()
    in_degree: tuple = ()
    uniform_weights: bool = False
    in_degree_criterion: Optional[bool] = None  # every in-degree == base; only meaningful for uniform weights


def in_degrees(automaton: AugmentedAutomaton) -> tuple:
    counts = [0] * automaton.n_states
    for row in automaton.delta:
        for nxt in row:
            counts[nxt] += 1
    return tuple(counts)


def check_measure_preservation(automaton: AugmentedAutomaton) -> MeasureReport:
    """
    Lebesgue x weights is invariant iff every state M' satisfies
        sum over (j, M) with delta(j, M) = M' of weight(M) / b == weight(M').
    """
    b = automaton.base
    inflow = [Fraction(0)] * automaton.n_states
    for state, row in enumerate(automaton.delta):
        share = automaton.weights[state] / b
        for nxt in row:
            inflow[nxt] += share
    violating = next((s for s in range(automaton.n_states) if inflow[s] != automaton.weights[s]), None)
    degrees = in_degrees(automaton)
    uniform = len(set(automaton.weights)) == 1
    criterion = all(d == b for d in degrees) if uniform else None
    return MeasureReport(
        preserved=violating is None,
        violating_state=None if violating is None else automaton.labels[violating],
        inflow=tuple(inflow),
        in_degree=degrees,
        uniform_weights=uniform,
        in_degree_criterion=criterion,
    )


def expected_ratio(automaton: AugmentedAutomaton, block) -> Fraction:
    """mu(target(block)) / mu(selection set): the limiting visit ratio."""
    targets = automaton.targets(block)
    selection = sum((automaton.weights[s] for s in automaton.selection_set), Fraction(0))
    if selection == 0:
        raise AutomatonError("selection set carries no weight")
    return sum((automaton.weights[s] for s in targets), Fraction(0)) / selection


# --- Running alongside a stream ---

@dataclass
class StateVisitCensus:
    visits: np.ndarray  # visits[state] over all steps
    selected_visits: np.ndarray  # visits[state] counted only at selected steps
    steps: int = 0

    def __post_init__(self):
        if int(np.sum(self.visits)) != self.steps:
            raise AutomatonError("state visit counts must sum to the number of steps")

    @property
    def selections(self) -> int:
        return int(np.sum(self.selected_visits))


@dataclass
class AutomatonRun:
    automaton: AugmentedAutomaton
    census: StateVisitCensus
    selected_steps: np.ndarray  # 1-based steps n where the selection criterion held
    selected_states: np.ndarray  # state after each selected step

    def target_steps(self, block) -> np.ndarray:
        mask = np.isin(self.selected_states, self.automaton.targets(block))
        return self.selected_steps[mask]


def run_with_automaton(automaton: AugmentedAutomaton, stream: DigitStream, start_state: Optional[int] = None,
                       skip: int = 0) -> AutomatonRun:
    """
    Iterates M <- delta(a_n, M) over the stream. Step n is selected when the
    state after it lies in the selection set, or, for digit-test automata,
    when a_n is a selecting digit. The first `skip` digits are not read;
    steps keep their stream positions.
    """
    if skip < 0:
        raise AutomatonError(f"skip must be >= 0, got {skip}")
    if stream.base != automaton.base:
        raise AutomatonError(f"automaton reads base {automaton.base}, stream is base {stream.base}")
    if not stream.finite:
        raise AutomatonError("run_with_automaton needs a finite stream")
    b = automaton.base
    n = automaton.n_states
    flat = [nxt for row in automaton.delta for nxt in row]
    selecting_state = np.zeros(n, dtype=bool)
    selecting_state[list(automaton.selection_set)] = True
    selecting_digits = None
    if automaton.selection_digits is not None:
        selecting_digits = np.asarray(sorted(automaton.selection_digits), dtype=np.int64)

    state = automaton.start if start_state is None else start_state
    visits = np.zeros(n, dtype=np.int64)
    selected_visits = np.zeros(n, dtype=np.int64)
    steps = []
    states = []
    position = 1
    for chunk in stream.chunks():
        if position <= skip:
            drop = min(len(chunk), skip - position + 1)
            position += drop
            chunk = chunk[drop:]
            if len(chunk) == 0:
                continue
        trajectory = []
        for d in chunk.tolist():
            state = flat[state * b + d]
            trajectory.append(state)
        trajectory = np.asarray(trajectory, dtype=np.int64)
        if selecting_digits is not None:
            mask = np.isin(chunk, selecting_digits)
        else:
            mask = selecting_state[trajectory]
        visits += np.bincount(trajectory, minlength=n)
        selected_visits += np.bincount(trajectory[mask], minlength=n)
        steps.append(np.nonzero(mask)[0].astype(np.int64) + position)
        states.append(trajectory[mask])
        position += len(chunk)

    census = StateVisitCensus(visits=visits, selected_visits=selected_visits, steps=max(position - 1 - skip, 0))
    empty = np.zeros(0, dtype=np.int64)
    return AutomatonRun(
        automaton=automaton,
        census=census,
        selected_steps=np.concatenate(steps) if steps else empty,
        selected_states=np.concatenate(states) if states else empty,
    )


def visit_ratio(census: StateVisitCensus, target_states, selection_states) -> Fraction:
    """Selected visits to the target states over selected visits to the selection states."""
    target_states = list(target_states)
    selection_states = list(selection_states)
    denominator = int(np.sum(census.selected_visits[selection_states])) if selection_states else 0
    if denominator == 0:
        raise AutomatonError("visit ratio undefined: no visits to the selection states")
    numerator = int(np.sum(census.selected_visits[target_states])) if target_states else 0
    return Fraction(numerator, denominator)


# --- Automaton files ---

def label_token(label) -> str:
    if isinstance(label, tuple) and len(label) == 2 and isinstance(label[1], tuple):
        return f"{label[0]}:{','.join(str(d) for d in label[1])}"
    if isinstance(label, tuple):
        return ','.join(str(d) for d in label)
    return str(label).replace(' ', '_')


def write_automaton_file(automaton: AugmentedAutomaton, path):
    path = ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"base={automaton.base} states={automaton.n_states} start={automaton.start}\n")
        for state, label in enumerate(automaton.labels):
            w = automaton.weights[state]
            selected = 1 if state in automaton.selection_set else 0
            f.write(f"{state} {label_token(label)} {w.numerator}/{w.denominator} {selected}\n")
        for row in automaton.delta:
            f.write(' '.join(str(nxt) for nxt in row) + "\n")


def read_automaton_file(path) -> AugmentedAutomaton:
    """
    Header `base=<b> states=<n> start=<id>`, then n lines `id label num/den
    selected(0|1)`, then n lines of b successor ids.
    """
    with open(path, 'r', encoding='utf-8') as f:
        lines = [line.strip() for line in f if line.strip() and not line.lstrip().startswith('#')]
    if not lines:
        raise AutomatonFileError(f"{path}: empty automaton file")
    try:
        header = dict(token.split('=', 1) for token in lines[0].split())
        base = int(header['base'])
        n = int(header['states'])
        start = int(header.get('start', 0))
    except (KeyError, ValueError):
        raise AutomatonFileError(f"{path}: line 1 must read 'base=<b> states=<n> start=<id>'") from None
    if len(lines) != 1 + 2 * n:
        raise AutomatonFileError(f"{path}: expected {2 * n} lines after the header, found {len(lines) - 1}")
    labels, weights, selection = [None] * n, [None] * n, set()
    for lineno, line in enumerate(lines[1:n + 1], start=2):
        parts = line.split()
        try:
            state, label, weight, selected = int(parts[0]), parts[1], Fraction(parts[2]), int(parts[3])
        except (IndexError, ValueError, ZeroDivisionError):
            raise AutomatonFileError(f"{path}: state line {lineno} must read 'id label num/den selected'") from None
        if not 0 <= state < n or labels[state] is not None:
            raise AutomatonFileError(f"{path}: state line {lineno} has a bad or repeated id {state}")
        labels[state], weights[state] = label, weight
        if selected:
            selection.add(state)
    try:
        delta = tuple(tuple(int(v) for v in line.split()) for line in lines[n + 1:])
    except ValueError:
        raise AutomatonFileError(f"{path}: transition lines must hold integer state ids") from None
    try:
        return AugmentedAutomaton(
            name='file', base=base, labels=tuple(labels), delta=delta, weights=tuple(weights),
            selection_set=frozenset(selection), start=start, params={'path': str(path)},
        )
    except AutomatonError as e:
        raise AutomatonFileError(f"{path}: {e}") from None
