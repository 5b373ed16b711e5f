"""
Evaluator Module
Greedy decoding with a trained model, attachment scores with punctuation
exclusion, and recall by signed arc length
"""

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tabulate import tabulate

from src.advanced.neural import ModelParams, Vocab, encode, score as score_configuration
from src.core.transition_system import (
    SHIFT, Arc, Configuration, Transition, TransitionKind, apply, initial, is_terminal,
    legal_transitions,
)
from src.core.treebank import ROOT, GoldTree, Token
from src.utils.logger import log_metrics, setup_logger

logger = setup_logger("Evaluator")

PUNCT_PRESETS: Dict[str, FrozenSet[str]] = {
    'ctb': frozenset({'PU'}),
    'ud-zh': frozenset({'``', "''", ':', ',', '.'}),
    'upos-punct': frozenset({'PUNCT'}),
}

ROOT_BUCKET = 'root'

Prediction = Dict[int, Tuple[int, str]]


class EvaluationError(ValueError):
    """Gold and predicted data do not line up"""
    pass


def greedy_decode(sentence: Sequence[Token], params: ModelParams, vocab: Vocab) -> List[Arc]:
    """
    Parse a sentence by repeatedly taking the most probable legal transition

    Illegal kinds are masked before the argmax, as is attaching to ROOT
    before the buffer is empty; arc transitions take the
    argmax over the full label inventory. Terminates after 2(n+1)-1 steps.

    Returns:
        Exactly n arcs, sorted by dependent
    """
    if not sentence:
        raise EvaluationError("Cannot decode an empty sentence")

    labels = vocab.labels
    encoding = encode(sentence, params, vocab, train_mode=False)
    config = initial(len(sentence))

    while not is_terminal(config):
        trans_probs, label_probs = score_configuration(config, encoding, params)
        masked = np.full(trans_probs.shape, -np.inf)
        for kind in _decodable(config):
            masked[kind] = trans_probs[kind]

        kind = TransitionKind(int(np.argmax(masked)))
        if kind == TransitionKind.SHIFT:
            transition = SHIFT
        else:
            transition = Transition(kind, labels[int(np.argmax(label_probs))])
        config = apply(config, transition)

    return sorted(config.arcs, key=lambda arc: arc.dependent)


def _decodable(config: Configuration) -> FrozenSet[TransitionKind]:
    """Legal kinds, minus a root attachment while words remain in the buffer"""
    kinds = legal_transitions(config)
    if config.stack[-2:-1] == (ROOT,) and config.buffer_cursor <= config.n:
        return kinds - {TransitionKind.RIGHT_ARC}
    return kinds


def decode_all(
    sentences: Sequence[Sequence[Token]],
    params: ModelParams,
    vocab: Vocab,
    threads: int = 1,
) -> List[List[Arc]]:
    """
    Decode many sentences over a shared read-only model

    Output order follows input order for any thread count.
    """
    if threads <= 1 or len(sentences) <= 1:
        return [greedy_decode(s, params, vocab) for s in sentences]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: greedy_decode(s, params, vocab), sentences))


def arcs_to_prediction(arcs: Iterable[Arc]) -> Prediction:
    return {arc.dependent: (arc.head, arc.label) for arc in arcs}


def tree_to_prediction(tree: GoldTree) -> Prediction:
    return {t.index: (t.head, t.label) for t in tree.tokens}


@dataclass(frozen=True)
class LengthBucket:
    bucket: str
    gold: int
    recalled: int

    @property
    def recall(self) -> float:
        return 100.0 * self.recalled / self.gold if self.gold else 0.0


@dataclass
class EvalReport:
    """Attachment scores in percent"""

    uas: float
    las: float
    uem: float
    evaluated_tokens: int
    excluded_punct: int
    sentences: int
    arc_length_recall: List[LengthBucket] = field(default_factory=list)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['arc_length_recall'] = [
            {**asdict(b), 'recall': b.recall} for b in self.arc_length_recall
        ]
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def bucket_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(b.bucket, b.gold, b.recalled, b.recall) for b in self.arc_length_recall],
            columns=['bucket', 'gold', 'recalled', 'recall'],
        )


def _normalize(gold: Sequence[GoldTree], predictions: Sequence) -> List[Prediction]:
    if len(gold) != len(predictions):
        raise EvaluationError(f"Gold has {len(gold)} sentences but predictions have {len(predictions)}")

    normalized = []
    for position, (tree, pred) in enumerate(zip(gold, predictions), 1):
        if isinstance(pred, GoldTree):
            pred = tree_to_prediction(pred)
        elif not isinstance(pred, Mapping):
            pred = arcs_to_prediction(pred)

        if set(pred) != set(range(1, tree.n + 1)):
            name = tree.sent_id or f"#{position}"
            raise EvaluationError(
                f"Sentence {name}: {len(pred)} predicted heads for {tree.n} tokens"
            )
        normalized.append(pred)
    return normalized


def _non_punct(tree: GoldTree, punct_tags: FrozenSet[str]) -> List[Token]:
    return [t for t in tree.tokens if t.pos not in punct_tags]


def score(
    gold: Sequence[GoldTree],
    predictions: Sequence[Union[Iterable[Arc], Prediction, GoldTree]],
    punct_tags: FrozenSet[str] = frozenset(),
    min_bucket_count: int = 100,
) -> EvalReport:
    """
    Compute UAS, LAS and UEM over non-punctuation tokens

    Punctuation is decided by the gold POS tag. A sentence counts as an exact
    match when all of its non-punctuation tokens have the correct head.

    Args:
        gold: Gold trees
        predictions: One arc set (or dependent -> (head, label) mapping, or
            predicted tree) per gold tree
        punct_tags: Gold POS tags treated as punctuation
        min_bucket_count: Passed to arc_length_recall

    Raises:
        EvaluationError: On sentence count or length mismatch
    """
    preds = _normalize(gold, predictions)

    evaluated = excluded = heads_ok = labels_ok = exact = 0
    for tree, pred in zip(gold, preds):
        sentence_ok = True
        for token in tree.tokens:
            if token.pos in punct_tags:
                excluded += 1
                continue
            evaluated += 1
            head, label = pred[token.index]
            if head == token.head:
                heads_ok += 1
                if label == token.label:
                    labels_ok += 1
            else:
                sentence_ok = False
        exact += sentence_ok

    def percent(part: int, whole: int) -> float:
        return 100.0 * part / whole if whole else 0.0

    report = EvalReport(
        uas=percent(heads_ok, evaluated),
        las=percent(labels_ok, evaluated),
        uem=percent(exact, len(gold)),
        evaluated_tokens=evaluated,
        excluded_punct=excluded,
        sentences=len(gold),
        arc_length_recall=arc_length_recall(gold, preds, punct_tags, min_bucket_count),
    )
    log_metrics(logger, "EVAL", uas=report.uas, las=report.las, uem=report.uem,
                tokens=evaluated, punct=excluded)
    return report


def _length_counts(gold: Sequence[GoldTree], preds: Sequence[Prediction], punct_tags: FrozenSet[str]):
    totals: Counter = Counter()
    hits: Counter = Counter()
    for tree, pred in zip(gold, preds):
        for token in _non_punct(tree, punct_tags):
            key = ROOT_BUCKET if token.head == ROOT else token.index - token.head
            totals[key] += 1
            if pred[token.index][0] == token.head:
                hits[key] += 1
    return totals, hits


def _tail_start(totals: Counter, sign: int, min_bucket_count: int) -> Optional[int]:
    """First length (walking outward from 1) with fewer than min_bucket_count gold arcs"""
    lengths = [k for k in totals if k != ROOT_BUCKET and k * sign > 0]
    if not lengths:
        return None
    longest = max(abs(k) for k in lengths)
    for distance in range(1, longest + 1):
        if totals[sign * distance] < min_bucket_count:
            return distance
    return None


def _bucket_of(key, starts: Dict[int, Optional[int]]) -> str:
    if key == ROOT_BUCKET:
        return ROOT_BUCKET
    sign = 1 if key > 0 else -1
    start = starts[sign]
    if start is not None and abs(key) >= start:
        return f">={start}" if sign > 0 else f"<=-{start}"
    return str(key)


def _bucket_order(name: str) -> Tuple[int, int]:
    if name == ROOT_BUCKET:
        return (2, 0)
    if name.startswith('<='):
        return (0, int(name[2:]))
    if name.startswith('>='):
        return (1, int(name[2:]))
    return (0 if int(name) < 0 else 1, int(name))


def arc_length_recall(
    gold: Sequence[GoldTree],
    predictions: Sequence,
    punct_tags: FrozenSet[str] = frozenset(),
    min_bucket_count: int = 100,
) -> List[LengthBucket]:
    """
    Head recall per signed arc length (dependent - head)

    Negative lengths are left dependents. On each side, the lengths from
    the first one with fewer than min_bucket_count gold arcs outward are
    merged into one tail bucket ("<=-k" or ">=k"). Root attachments form
    their own "root" bucket.
    """
    preds = _normalize(gold, predictions)
    totals, hits = _length_counts(gold, preds, punct_tags)
    starts = {
        sign: _tail_start(totals, sign, min_bucket_count) for sign in (1, -1)
    }

    merged_gold: Counter = Counter()
    merged_hits: Counter = Counter()
    for key, count in totals.items():
        name = _bucket_of(key, starts)
        merged_gold[name] += count
        merged_hits[name] += hits[key]

    return [
        LengthBucket(name, merged_gold[name], merged_hits[name])
        for name in sorted(merged_gold, key=_bucket_order)
    ]


def arc_length_table(
    gold: Sequence[GoldTree],
    systems: Mapping[str, Sequence],
    punct_tags: FrozenSet[str] = frozenset(),
    min_bucket_count: int = 100,
) -> pd.DataFrame:
    """
    Side-by-side recall per length bucket for several prediction sets

    Buckets depend only on the gold trees, so every system shares them.
    """
    frame = None
    for name, predictions in systems.items():
        buckets = arc_length_recall(gold, predictions, punct_tags, min_bucket_count)
        column = pd.DataFrame(
            [(b.bucket, b.gold, b.recall) for b in buckets],
            columns=['bucket', 'gold', f'{name}_recall'],
        )
        frame = column if frame is None else frame.merge(column, on=['bucket', 'gold'])

    if frame is None:
        return pd.DataFrame(columns=['bucket', 'gold'])
    return frame


def summary_table(reports: Mapping[str, EvalReport]) -> str:
    rows = [
        [name, r.uas, r.las, r.uem, r.evaluated_tokens, r.excluded_punct]
        for name, r in reports.items()
    ]
    return tabulate(rows, headers=['system', 'UAS', 'LAS', 'UEM', 'tokens', 'punct'],
                    tablefmt='simple', floatfmt='.2f')


def evaluate_model(
    gold: Sequence[GoldTree],
    params: ModelParams,
    vocab: Vocab,
    punct_tags: FrozenSet[str] = frozenset(),
    threads: int = 1,
) -> EvalReport:
    """Decode the gold sentences and score the result"""
    predictions = decode_all([tree.tokens for tree in gold], params, vocab, threads)
    return score(gold, predictions, punct_tags)
