"""
Oracle Module
Standard (larc-preferring) oracle, hybrid oracle returning every correct
transition, and an exhaustive search used to enumerate correct sequences
"""

import sys
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Tuple

from src.core.transition_system import (
    SHIFT, Configuration, Transition, TransitionKind, apply, initial,
    is_terminal, left_arc, legal_transitions, right_arc,
)
from src.core.treebank import ROOT, GoldTree
from src.utils.logger import setup_logger
from src.utils.settings import get_settings

logger = setup_logger("Oracle")

State = Tuple[Tuple[int, ...], int]


class OracleError(ValueError):
    """The oracle is undefined for this configuration or tree"""
    pass


@dataclass(frozen=True)
class OracleOutcome:
    """The transition to apply and every transition that keeps the gold tree reachable"""

    chosen: Transition
    correct_set: Tuple[Transition, ...]

    @property
    def ambiguous(self) -> bool:
        return len(self.correct_set) > 1


@dataclass(frozen=True)
class EnumerationResult:
    sequences: List[Tuple[Transition, ...]]
    truncated: bool
    total: int


def verify_counters(c: Configuration, gold: GoldTree):
    """
    Recount unattached dependents against the gold tree

    Raises:
        AssertionError: If the maintained counters disagree with the recount
    """
    attached = {(arc.head, arc.label, arc.dependent) for arc in c.arcs}
    for h in range(gold.n + 1):
        left = sum(1 for d in gold.left_deps[h] if (h, gold.labels[d], d) not in attached)
        right = sum(1 for d in gold.right_deps[h] if (h, gold.labels[d], d) not in attached)
        assert c.unattached_left[h] == left, f"left counter of {h}: {c.unattached_left[h]} != {left}"
        assert c.unattached_right[h] == right, f"right counter of {h}: {c.unattached_right[h]} != {right}"


def _check_gold_path(c: Configuration, gold: GoldTree):
    if not c.tracked or c.gold is not gold and c.gold != gold:
        raise OracleError("Configuration is not tracking this gold tree; build it with initial(gold)")
    if not c.consistent:
        raise OracleError(f"Configuration left the gold path: {c.summary()}")
    if get_settings().debug_checks:
        verify_counters(c, gold)


def _has_unattached(c: Configuration, token: int) -> bool:
    return c.unattached_left[token] > 0 or c.unattached_right[token] > 0


def standard_oracle(c: Configuration, gold: GoldTree) -> Transition:
    """
    Static oracle: larc whenever it builds a gold arc, then rarc once the
    stack top is complete, otherwise shift

    Raises:
        OracleError: If the configuration is not on a gold path
    """
    _check_gold_path(c, gold)

    if len(c.stack) >= 2:
        s1, s0 = c.s1, c.s0
        if s1 != ROOT and gold.heads[s1] == s0:
            return left_arc(gold.labels[s1])
        if gold.heads[s0] == s1 and not _has_unattached(c, s0):
            return right_arc(gold.labels[s0])

    if TransitionKind.SHIFT not in legal_transitions(c):
        raise OracleError(f"No correct transition from {c.summary()}")
    return SHIFT


def hybrid_oracle(c: Configuration, gold: GoldTree, rng, p_shift: float = 0.5) -> OracleOutcome:
    """
    Return every correct transition and one of them to apply

    When the stack top's gold left dependent is s1 and the stack top still
    has unattached right dependents, both shift and larc are correct; shift
    is chosen with probability p_shift. Counter lookups are O(1).

    Args:
        c: Configuration built with initial(gold)
        gold: Gold tree
        rng: Any object with random() -> float in [0, 1)
        p_shift: Probability of deferring the larc at an ambiguous step

    Raises:
        OracleError: If the configuration is not on a gold path
    """
    _check_gold_path(c, gold)

    if len(c.stack) >= 2:
        s1, s0 = c.s1, c.s0
        if s1 != ROOT and gold.heads[s1] == s0:
            larc = left_arc(gold.labels[s1])
            if c.unattached_right[s0] > 0:
                chosen = larc if rng.random() < 1.0 - p_shift else SHIFT
                return OracleOutcome(chosen, (SHIFT, larc))
            return OracleOutcome(larc, (larc,))
        if gold.heads[s0] == s1 and not _has_unattached(c, s0):
            rarc = right_arc(gold.labels[s0])
            return OracleOutcome(rarc, (rarc,))

    if TransitionKind.SHIFT not in legal_transitions(c):
        raise OracleError(f"No correct transition from {c.summary()}")
    return OracleOutcome(SHIFT, (SHIFT,))


class _CompletionSearch:
    """
    Counts gold-reaching completions from (stack, cursor) states

    Only gold arcs are ever built, so the arc set of a state is the set of
    gold arcs of its reduced tokens and (stack, cursor) identifies it.
    """

    def __init__(self, gold: GoldTree):
        self.gold = gold
        self.memo: Dict[State, int] = {}

    def moves(self, state: State) -> List[Tuple[Transition, State]]:
        """Successors in lexicographic order: shift, larc, rarc"""
        stack, cursor = state
        gold = self.gold
        result = []
        if cursor <= gold.n:
            result.append((SHIFT, (stack + (cursor,), cursor + 1)))
        if len(stack) >= 2:
            s1, s0 = stack[-2], stack[-1]
            if s1 != ROOT and gold.heads[s1] == s0:
                result.append((left_arc(gold.labels[s1]), (stack[:-2] + (s0,), cursor)))
            if gold.heads[s0] == s1:
                result.append((right_arc(gold.labels[s0]), (stack[:-1], cursor)))
        return result

    def count(self, state: State) -> int:
        if state in self.memo:
            return self.memo[state]
        stack, cursor = state
        if cursor > self.gold.n and stack == (ROOT,):
            total = 1
        else:
            total = sum(self.count(successor) for _, successor in self.moves(state))
        self.memo[state] = total
        return total


def _gold_arcs_only(c: Configuration, gold: GoldTree) -> bool:
    return all(gold.has_arc(arc.head, arc.label, arc.dependent) for arc in c.arcs)


def _ensure_recursion(n: int):
    needed = 4 * (n + 1) + 100
    if sys.getrecursionlimit() < needed:
        sys.setrecursionlimit(needed)


def correct_set_bruteforce(c: Configuration, gold: GoldTree) -> FrozenSet[Transition]:
    """
    Legal transitions after which some completion reaches exactly the gold arcs

    Computed by exhaustive memoized search; intended for small sentences.
    """
    if is_terminal(c) or not _gold_arcs_only(c, gold):
        return frozenset()

    _ensure_recursion(gold.n)
    search = _CompletionSearch(gold)
    state = (c.stack, c.buffer_cursor)
    return frozenset(t for t, successor in search.moves(state) if search.count(successor) > 0)


def count_sequences(gold: GoldTree) -> int:
    """Exact number of correct transition sequences (0 for non-projective trees)"""
    _ensure_recursion(gold.n)
    return _CompletionSearch(gold).count(((), 0))


def enumerate_sequences(gold: GoldTree, limit: int = 64) -> EnumerationResult:
    """
    List every transition sequence that builds exactly the gold tree

    Sequences come in lexicographic order (shift < larc < rarc). At most
    `limit` are returned; `truncated` tells whether more exist.

    Raises:
        OracleError: If the tree is non-projective
    """
    if not gold.projective:
        raise OracleError(f"Sentence {gold.sent_id or '<unnamed>'} is non-projective; no arc-standard sequence exists")

    _ensure_recursion(gold.n)
    search = _CompletionSearch(gold)
    start: State = ((), 0)
    total = search.count(start)
    sequences: List[Tuple[Transition, ...]] = []

    def walk(state: State, prefix: List[Transition]):
        if len(sequences) >= limit:
            return
        stack, cursor = state
        if cursor > gold.n and stack == (ROOT,):
            sequences.append(tuple(prefix))
            return
        for t, successor in search.moves(state):
            if search.count(successor) > 0:
                prefix.append(t)
                walk(successor, prefix)
                prefix.pop()

    walk(start, [])
    logger.debug(f"Enumerated {len(sequences)}/{total} sequences for sentence {gold.sent_id}")
    return EnumerationResult(sequences=sequences, truncated=total > len(sequences), total=total)


def oracle_walk(gold: GoldTree, rng=None, p_shift: float = 0.5, standard: bool = False) -> List[Tuple[Configuration, OracleOutcome]]:
    """
    Follow an oracle from the initial configuration to the terminal one

    Returns:
        (configuration, outcome) for every step; the final configuration is
        apply(last configuration, last chosen transition)
    """
    if not gold.projective:
        raise OracleError(f"Sentence {gold.sent_id or '<unnamed>'} is non-projective")

    config = initial(gold)
    steps = []
    while not is_terminal(config):
        if standard:
            t = standard_oracle(config, gold)
            outcome = OracleOutcome(t, (t,))
        else:
            outcome = hybrid_oracle(config, gold, rng, p_shift)
        steps.append((config, outcome))
        config = apply(config, outcome.chosen)
    return steps
