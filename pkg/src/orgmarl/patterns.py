"""The trajectory-pattern language: nested label sequences with cardinality
bounds, an intensional way to describe sets of histories.

Grammar (whitespace insignificant)::

    P     := '[' item (',' item)* ']' '<' INT ',' (INT | '*') '>'
    item  := LABEL | P
    LABEL := [A-Za-z0-9_#.|-]+

Inside a bracket group, runs of bare labels pair up as
``observation, action`` couples (an odd run is an error). A group holding
only labels parses as a leaf; a group holding at least one nested pattern
parses as a node whose label runs become implicit ``<1,1>`` leaf children.
``'*'`` is the unbounded upper cardinality and ``'#any'`` the wildcard label
matching exactly one label of either kind.

Example::

    [o1,a1,[o2,a2]<0,2>]<1,*>

is a node repeating, once or more, the pair ``(o1, a1)`` followed by zero to
two repetitions of ``(o2, a2)``. A history matches a pattern when it contains
at least one contiguous sub-sequence realizing it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

from .trajectory import History, Step

WILDCARD = "#any"


class _Star:
    """Unbounded upper cardinality."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "*"


STAR = _Star()
Cardinality = Union[int, _Star]


class PatternError(ValueError):
    """Syntax or structural error in a pattern, with byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


def _check_bounds(cmin: int, cmax: Cardinality, offset: int) -> None:
    if cmin < 0:
        raise PatternError(f"c_min must be >= 0, got {cmin}", offset)
    if cmax is not STAR and cmax < cmin:
        raise PatternError(f"c_min {cmin} exceeds c_max {cmax}", offset)


@dataclass(frozen=True)
class Leaf:
    """A pair sequence repeated between cmin and cmax times."""

    pairs: tuple[Step, ...]
    cmin: int
    cmax: Cardinality

    def __post_init__(self) -> None:
        if not self.pairs:
            raise PatternError("leaf needs at least one pair", 0)
        _check_bounds(self.cmin, self.cmax, 0)


@dataclass(frozen=True)
class Node:
    """Ordered children matched in sequence, the whole body repeated
    between cmin and cmax times."""

    children: tuple["Pattern", ...]
    cmin: int
    cmax: Cardinality

    def __post_init__(self) -> None:
        if not self.children:
            raise PatternError("node needs at least one child", 0)
        _check_bounds(self.cmin, self.cmax, 0)


Pattern = Union[Leaf, Node]

_TOKEN_RE = re.compile(r"[ \t\r\n]+|(?P<p>[\[\]<>,*])|(?P<label>[A-Za-z0-9_#.|-]+)")


def _tokenize(text: str) -> Iterator[tuple[str, str, int]]:
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PatternError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup == "p":
            yield "punct", m.group(), pos
        elif m.lastgroup == "label":
            yield "label", m.group(), pos
        pos = m.end()
    yield "eof", "", len(text)


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(_tokenize(text))
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> int:
        kind, text, offset = self.take()
        if kind != "punct" or text != value:
            raise PatternError(f"expected {value!r}, found {text or 'end of input'!r}", offset)
        return offset

    def parse_pattern(self) -> Pattern:
        open_offset = self.expect("[")
        items: list[tuple[str, object, int]] = []
        while True:
            kind, text, offset = self.peek()
            if kind == "label":
                self.take()
                items.append(("label", text, offset))
            elif kind == "punct" and text == "[":
                items.append(("pattern", self.parse_pattern(), offset))
            else:
                raise PatternError(
                    f"expected label or '[', found {text or 'end of input'!r}", offset
                )
            kind, text, offset = self.peek()
            if kind == "punct" and text == ",":
                self.take()
                continue
            break
        self.expect("]")
        cmin, cmax, card_offset = self.parse_cardinality()
        if all(k == "label" for k, _, _ in items):
            pairs = self.pair_up(items, open_offset)
            return Leaf(pairs=pairs, cmin=cmin, cmax=cmax)
        children: list[Pattern] = []
        run: list[tuple[str, object, int]] = []
        for item in items:
            if item[0] == "label":
                run.append(item)
            else:
                if run:
                    children.append(Leaf(pairs=self.pair_up(run, run[0][2]), cmin=1, cmax=1))
                    run = []
                children.append(item[1])  # type: ignore[arg-type]
        if run:
            children.append(Leaf(pairs=self.pair_up(run, run[0][2]), cmin=1, cmax=1))
        return Node(children=tuple(children), cmin=cmin, cmax=cmax)

    def parse_cardinality(self) -> tuple[int, Cardinality, int]:
        offset = self.expect("<")
        cmin = self.parse_int()
        self.expect(",")
        kind, text, toff = self.peek()
        if kind == "punct" and text == "*":
            self.take()
            cmax: Cardinality = STAR
        else:
            cmax = self.parse_int()
        self.expect(">")
        _check_bounds(cmin, cmax, offset)
        return cmin, cmax, offset

    def parse_int(self) -> int:
        kind, text, offset = self.take()
        if kind != "label" or not text.isdigit():
            raise PatternError(f"expected integer, found {text or 'end of input'!r}", offset)
        return int(text)

    @staticmethod
    def pair_up(items: list[tuple[str, object, int]], offset: int) -> tuple[Step, ...]:
        if len(items) % 2 != 0:
            raise PatternError(
                f"odd number of labels ({len(items)}) cannot pair into "
                "(observation, action) couples",
                offset,
            )
        labels = [str(it[1]) for it in items]
        return tuple((labels[k], labels[k + 1]) for k in range(0, len(labels), 2))


def parse_pattern(text: str) -> Pattern:
    """Parse a pattern string into its tree form."""
    if not text or not text.strip():
        raise PatternError("empty pattern", 0)
    parser = _Parser(text)
    pattern = parser.parse_pattern()
    kind, trailing, offset = parser.peek()
    if kind != "eof":
        raise PatternError(f"trailing input {trailing!r}", offset)
    return pattern


def pattern_text(pattern: Pattern) -> str:
    """Render a pattern tree back to its string form (parse round-trips)."""
    if isinstance(pattern, Leaf):
        body = ",".join(label for pair in pattern.pairs for label in pair)
    else:
        body = ",".join(pattern_text(child) for child in pattern.children)
    cmax = "*" if pattern.cmax is STAR else str(pattern.cmax)
    return f"[{body}]<{pattern.cmin},{cmax}>"


# ---------------------------------------------------------------------------
# Matching


def _labels_equal(pattern_label: str, history_label: str) -> bool:
    return pattern_label == WILDCARD or pattern_label == history_label


def _pairs_equal(pattern_pair: Step, history_pair: Step) -> bool:
    return _labels_equal(pattern_pair[0], history_pair[0]) and _labels_equal(
        pattern_pair[1], history_pair[1]
    )


def matches_empty(pattern: Pattern) -> bool:
    """Whether the pattern can realize the empty segment."""
    if pattern.cmin == 0:
        return True
    if isinstance(pattern, Leaf):
        return False
    return all(matches_empty(child) for child in pattern.children)


def _segment_starts(pattern: Pattern, history: History, end: int, memo: dict) -> tuple[int, ...]:
    """All start indices i such that history[i:end] realizes the pattern."""
    key = (id(pattern), end)
    cached = memo.get(key)
    if cached is not None:
        return cached

    if isinstance(pattern, Leaf):
        pairs = pattern.pairs
        width = len(pairs)
        # Count consecutive repetitions of the pair block ending at `end`.
        max_reps = 0
        pos = end
        while pos - width >= 0 and all(
            _pairs_equal(pairs[k], history[pos - width + k]) for k in range(width)
        ):
            max_reps += 1
            pos -= width
        hi = max_reps if pattern.cmax is STAR else min(max_reps, pattern.cmax)
        starts = tuple(end - reps * width for reps in range(pattern.cmin, hi + 1))
        memo[key] = starts
        return starts

    # Node: starts of one body repetition ending at a given position.
    def body_starts(at: int) -> tuple[int, ...]:
        positions = {at}
        for child in reversed(pattern.children):
            positions = {
                start
                for pos in positions
                for start in _segment_starts(child, history, pos, memo)
            }
            if not positions:
                break
        return tuple(positions)

    # Walk repetitions of the body back from `end`. Counts saturate at the
    # acceptance bound so unbounded cardinalities terminate; with '*' the
    # walk keeps extending positions from saturated states (more repetitions
    # stay acceptable), while a finite c_max cuts expansion off.
    star = pattern.cmax is STAR
    cap = pattern.cmin if star else pattern.cmax
    best: dict[int, set[int]] = {end: {0}}
    frontier = [(end, 0)]
    while frontier:
        pos, count = frontier.pop()
        if count >= cap and not star:
            continue
        nxt = min(count + 1, cap)
        for start in body_starts(pos):
            counts = best.setdefault(start, set())
            if nxt not in counts:
                counts.add(nxt)
                frontier.append((start, nxt))

    if star:
        starts = tuple(sorted(pos for pos, counts in best.items() if max(counts) >= cap))
    else:
        starts = tuple(
            sorted(
                pos
                for pos, counts in best.items()
                if any(pattern.cmin <= c <= pattern.cmax for c in counts)
            )
        )
    memo[key] = starts
    return starts


def match_ends_at(pattern: Pattern, history: History, end: int | None = None) -> bool:
    """Whether some segment ending exactly at ``end`` realizes the pattern."""
    if end is None:
        end = len(history)
    return bool(_segment_starts(pattern, history, end, {}))


def matches(pattern: Pattern, history: History) -> bool:
    """Whether the history contains a contiguous sub-sequence realizing the
    pattern."""
    memo: dict = {}
    return any(
        _segment_starts(pattern, history, end, memo)
        for end in range(len(history), -1, -1)
    )


def belongs(pattern: Pattern, history: History) -> bool:
    """Membership of a history in the set a pattern describes (alias of
    :func:`matches`)."""
    return matches(pattern, history)


def realize(pattern: Pattern) -> History:
    """The minimal concrete history realizing the pattern (every cardinality
    at c_min). Wildcards cannot be realized."""
    if isinstance(pattern, Leaf):
        for obs, act in pattern.pairs:
            if obs == WILDCARD or act == WILDCARD:
                raise PatternError("cannot realize a wildcard label", 0)
        return tuple(pattern.pairs) * pattern.cmin
    body: list[Step] = []
    for child in pattern.children:
        body.extend(realize(child))
    return tuple(body) * pattern.cmin
