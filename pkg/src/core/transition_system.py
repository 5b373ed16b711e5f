"""
Arc-Standard Transition System
Configurations, legal transitions, transition application, and terminal detection
"""

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from src.core.treebank import ROOT, GoldTree
from src.utils.logger import setup_logger

logger = setup_logger("TransitionSystem")


class TransitionError(ValueError):
    """Illegal transition or invalid sentence length"""
    pass


class TransitionKind(IntEnum):
    """Transition kinds; the integer value is the classifier's output index"""

    SHIFT = 0
    LEFT_ARC = 1
    RIGHT_ARC = 2


_NAMES = {
    TransitionKind.SHIFT: 'shift',
    TransitionKind.LEFT_ARC: 'larc',
    TransitionKind.RIGHT_ARC: 'rarc',
}
_KINDS = {name: kind for kind, name in _NAMES.items()}


@dataclass(frozen=True, order=True)
class Transition:
    """A transition; arc transitions carry a relation label, shift carries none"""

    kind: TransitionKind
    label: Optional[str] = None

    def __post_init__(self):
        if self.kind == TransitionKind.SHIFT and self.label is not None:
            raise TransitionError("shift carries no label")
        if self.kind != TransitionKind.SHIFT and not self.label:
            raise TransitionError(f"{_NAMES[self.kind]} requires a label")

    def __str__(self) -> str:
        if self.kind == TransitionKind.SHIFT:
            return 'shift'
        return f"{_NAMES[self.kind]}:{self.label}"

    @classmethod
    def parse(cls, text: str) -> "Transition":
        """Inverse of str(): 'shift', 'larc:LABEL' or 'rarc:LABEL'"""
        name, _, label = text.strip().partition(':')
        if name not in _KINDS:
            raise TransitionError(f"Unknown transition: {text!r}")
        return cls(_KINDS[name], label or None)

    @property
    def name(self) -> str:
        return _NAMES[self.kind]


SHIFT = Transition(TransitionKind.SHIFT)


def left_arc(label: str) -> Transition:
    return Transition(TransitionKind.LEFT_ARC, label)


def right_arc(label: str) -> Transition:
    return Transition(TransitionKind.RIGHT_ARC, label)


@dataclass(frozen=True)
class Arc:
    head: int
    label: str
    dependent: int

    def __post_init__(self):
        if self.dependent < 1:
            raise TransitionError(f"Arc dependent must be a word, got {self.dependent}")
        if self.head == self.dependent:
            raise TransitionError(f"Arc head and dependent are both {self.head}")


@dataclass(frozen=True)
class Configuration:
    """
    Parser state (stack, buffer, arcs)

    The buffer is ROOT, 1..n; buffer_cursor is the next position to shift.
    Unattached counters are present only when the configuration is driven
    by a gold tree.
    """

    n: int
    stack: Tuple[int, ...] = ()
    buffer_cursor: int = 0
    arcs: Tuple[Arc, ...] = ()
    heads: Tuple[int, ...] = ()
    unattached_left: Optional[Tuple[int, ...]] = None
    unattached_right: Optional[Tuple[int, ...]] = None
    consistent: bool = True
    gold: Optional[GoldTree] = field(default=None, repr=False, compare=False)

    @property
    def buffer(self) -> Tuple[int, ...]:
        return tuple(range(self.buffer_cursor, self.n + 1))

    @property
    def buffer_size(self) -> int:
        return self.n + 1 - self.buffer_cursor

    @property
    def s0(self) -> Optional[int]:
        return self.stack[-1] if self.stack else None

    @property
    def s1(self) -> Optional[int]:
        return self.stack[-2] if len(self.stack) >= 2 else None

    @property
    def b0(self) -> Optional[int]:
        return self.buffer_cursor if self.buffer_cursor <= self.n else None

    @property
    def tracked(self) -> bool:
        return self.unattached_left is not None

    def summary(self) -> str:
        return f"stack={list(self.stack)} buffer_cursor={self.buffer_cursor}/{self.n} arcs={len(self.arcs)}"


def initial(tree_length: Union[int, GoldTree], gold: Optional[GoldTree] = None) -> Configuration:
    """
    Create the initial configuration: empty stack, buffer ROOT 1..n

    Args:
        tree_length: Sentence length, or a gold tree (implies gold=tree)
        gold: When given, unattached counters are initialized from it

    Raises:
        TransitionError: If the sentence is empty
    """
    if isinstance(tree_length, GoldTree):
        gold = tree_length
        tree_length = gold.n
    if gold is not None and gold.n != tree_length:
        raise TransitionError(f"Gold tree has {gold.n} tokens, expected {tree_length}")
    if tree_length < 1:
        raise TransitionError(f"Sentence length must be >= 1, got {tree_length}")

    config = Configuration(n=tree_length, heads=(-1,) * (tree_length + 1))
    if gold is None:
        return config

    return replace(
        config,
        unattached_left=tuple(len(deps) for deps in gold.left_deps),
        unattached_right=tuple(len(deps) for deps in gold.right_deps),
        gold=gold,
    )


def legal_transitions(c: Configuration) -> FrozenSet[TransitionKind]:
    """Transition kinds whose preconditions hold; ROOT is never a dependent"""
    kinds = set()
    if c.buffer_cursor <= c.n:
        kinds.add(TransitionKind.SHIFT)
    if len(c.stack) >= 2:
        kinds.add(TransitionKind.RIGHT_ARC)
        if c.stack[-2] != ROOT:
            kinds.add(TransitionKind.LEFT_ARC)
    return frozenset(kinds)


def _attach(c: Configuration, head: int, label: str, dependent: int, stack: Tuple[int, ...]) -> Configuration:
    if c.heads[dependent] != -1:
        raise TransitionError(f"Token {dependent} already has head {c.heads[dependent]}")

    heads = list(c.heads)
    heads[dependent] = head
    updates = dict(
        stack=stack,
        arcs=c.arcs + (Arc(head, label, dependent),),
        heads=tuple(heads),
    )

    if c.tracked:
        gold = c.gold
        left = list(c.unattached_left)
        right = list(c.unattached_right)
        if gold.has_arc(head, label, dependent):
            if dependent < head:
                left[head] -= 1
            else:
                right[head] -= 1
            # a reduced token can no longer collect its own dependents
            complete = left[dependent] == 0 and right[dependent] == 0
            updates['consistent'] = c.consistent and complete
        else:
            updates['consistent'] = False
        updates['unattached_left'] = tuple(left)
        updates['unattached_right'] = tuple(right)

    return replace(c, **updates)


def apply(c: Configuration, t: Transition) -> Configuration:
    """
    Apply a transition and return the new configuration

    Raises:
        TransitionError: If the transition's preconditions do not hold
    """
    if t.kind not in legal_transitions(c):
        raise TransitionError(f"Illegal transition {t} in configuration {c.summary()}")

    if t.kind == TransitionKind.SHIFT:
        return replace(c, stack=c.stack + (c.buffer_cursor,), buffer_cursor=c.buffer_cursor + 1)

    s1, s0 = c.stack[-2], c.stack[-1]
    if t.kind == TransitionKind.LEFT_ARC:
        return _attach(c, s0, t.label, s1, c.stack[:-2] + (s0,))
    return _attach(c, s1, t.label, s0, c.stack[:-1])


def is_terminal(c: Configuration, n: Optional[int] = None) -> bool:
    """True iff the stack holds only ROOT, the buffer is empty, and n arcs exist"""
    n = c.n if n is None else n
    return c.stack == (ROOT,) and c.buffer_cursor > c.n and len(c.arcs) == n


def replay(start: Union[int, GoldTree, Configuration], transitions: Iterable[Transition]) -> Configuration:
    """Apply a sequence of transitions from a configuration (or from the initial one)"""
    config = start if isinstance(start, Configuration) else initial(start)
    for t in transitions:
        config = apply(config, t)
    return config


def sequence_length(n: int) -> int:
    """Number of transitions from initial to terminal: n+1 shifts and n arcs"""
    return 2 * (n + 1) - 1


def render(sequence: Sequence[Transition]) -> str:
    return ' '.join(str(t) for t in sequence)


def word_level_core(sequence: Sequence[Transition]) -> List[str]:
    """Kinds of a full sequence without the ROOT shift and the final root attachment"""
    return [t.name for t in sequence[1:-1]]
