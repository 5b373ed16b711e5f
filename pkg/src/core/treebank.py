"""
Treebank Module
Reads CoNLL-U treebanks into gold trees, checks projectivity, and computes
left/right branching and ambiguity statistics
"""

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import pandas as pd
import pyconll
from pyconll.exception import ParseError

from src.utils.logger import setup_logger
from src.utils.validators import validate_pos_column

logger = setup_logger("Treebank")

ROOT = 0

STATS_COLUMNS = [
    '#sentences', '#tokens', '#left dep.', '#right dep.',
    '#amb. sentences', '#amb. heads', '#amb. tokens',
]


class TreebankError(ValueError):
    """Malformed CoNLL-U input or an invalid dependency structure"""
    pass


@dataclass(frozen=True)
class Token:
    """One word of a sentence; head 0 is ROOT"""

    index: int
    form: str
    pos: str
    head: int
    label: str

    def __post_init__(self):
        if self.index < 1:
            raise TreebankError(f"Token index must be >= 1, got {self.index}")
        if self.head < 0:
            raise TreebankError(f"Token {self.index}: head must be >= 0, got {self.head}")
        if self.head == self.index:
            raise TreebankError(f"Token {self.index} cannot be its own head")


@dataclass(frozen=True)
class GoldTree:
    """
    A gold dependency tree with per-head dependent indexes

    left_deps and right_deps are indexed by head position 0..n, where slot 0
    is ROOT; the root word is the single right dependent of ROOT.
    """

    tokens: Tuple[Token, ...]
    left_deps: Tuple[Tuple[int, ...], ...]
    right_deps: Tuple[Tuple[int, ...], ...]
    projective: bool
    sent_id: str = ""
    heads: Tuple[int, ...] = field(default=(), repr=False, compare=False)
    labels: Tuple[str, ...] = field(default=(), repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.tokens)

    @property
    def root(self) -> int:
        return self.right_deps[ROOT][0]

    @property
    def forms(self) -> List[str]:
        return [t.form for t in self.tokens]

    @property
    def pos(self) -> List[str]:
        return [t.pos for t in self.tokens]

    def has_arc(self, head: int, label: str, dependent: int) -> bool:
        return 1 <= dependent <= self.n and self.heads[dependent] == head and self.labels[dependent] == label

    @classmethod
    def from_tokens(cls, tokens: Sequence[Token], sent_id: str = "") -> "GoldTree":
        """
        Build a validated tree from tokens

        Raises:
            TreebankError: If indices are not 1..n, there is not exactly one
                root, or the head links contain a cycle
        """
        tokens = tuple(tokens)
        n = len(tokens)
        name = sent_id or "<unnamed>"

        if n == 0:
            raise TreebankError(f"Sentence {name} is empty")

        for position, token in enumerate(tokens, 1):
            if token.index != position:
                raise TreebankError(
                    f"Sentence {name}: token ids must run 1..{n}, found {token.index} at position {position}"
                )
            if token.head > n:
                raise TreebankError(
                    f"Sentence {name}: token {token.index} points to head {token.head} beyond sentence length {n}"
                )

        heads = (-1,) + tuple(t.head for t in tokens)
        roots = [t.index for t in tokens if t.head == ROOT]
        if len(roots) != 1:
            raise TreebankError(f"Sentence {name} must have exactly one root, found {len(roots)}")

        _check_acyclic(heads, name)

        left: List[List[int]] = [[] for _ in range(n + 1)]
        right: List[List[int]] = [[] for _ in range(n + 1)]
        for dependent in range(1, n + 1):
            head = heads[dependent]
            if dependent < head:
                left[head].append(dependent)
            else:
                right[head].append(dependent)

        return cls(
            tokens=tokens,
            left_deps=tuple(tuple(deps) for deps in left),
            right_deps=tuple(tuple(deps) for deps in right),
            projective=_arcs_projective(heads),
            sent_id=sent_id,
            heads=heads,
            labels=("",) + tuple(t.label for t in tokens),
        )

    @classmethod
    def from_heads(
        cls,
        heads: Sequence[int],
        labels: Optional[Sequence[str]] = None,
        forms: Optional[Sequence[str]] = None,
        pos: Optional[Sequence[str]] = None,
        sent_id: str = "",
    ) -> "GoldTree":
        """Build a tree from a 1-based head array (heads[0] is token 1's head)"""
        n = len(heads)
        labels = labels or ["dep" if h else "root" for h in heads]
        forms = forms or [f"w{i}" for i in range(1, n + 1)]
        pos = pos or ["X"] * n
        tokens = [
            Token(index=i + 1, form=forms[i], pos=pos[i], head=int(heads[i]), label=labels[i])
            for i in range(n)
        ]
        return cls.from_tokens(tokens, sent_id=sent_id)


@dataclass(frozen=True)
class TreebankStats:
    """Branching and ambiguity counts over a treebank"""

    sentences: int = 0
    tokens: int = 0
    left_dep: int = 0
    right_dep: int = 0
    amb_sentences: int = 0
    amb_heads: int = 0
    amb_tokens: int = 0
    punct_tokens: int = 0

    def as_row(self) -> List[int]:
        return [
            self.sentences, self.tokens, self.left_dep, self.right_dep,
            self.amb_sentences, self.amb_heads, self.amb_tokens,
        ]


@dataclass
class InputSentence:
    """A CoNLL-U sentence together with its tokens, used when predictions are written back"""

    sentence: "pyconll.unit.sentence.Sentence"
    tokens: List[Token]
    sent_id: str


def _check_acyclic(heads: Sequence[int], name: str):
    """Every token must reach ROOT by following heads"""
    n = len(heads) - 1
    reaches_root = [False] * (n + 1)
    reaches_root[ROOT] = True

    for start in range(1, n + 1):
        path = []
        node = start
        seen = set()
        while not reaches_root[node]:
            if node in seen:
                raise TreebankError(f"Sentence {name} has a cycle through token {node}")
            seen.add(node)
            path.append(node)
            node = heads[node]
        for visited in path:
            reaches_root[visited] = True


def _arcs_projective(heads: Sequence[int]) -> bool:
    spans = [
        (min(heads[d], d), max(heads[d], d))
        for d in range(1, len(heads))
    ]
    for i, (a, b) in enumerate(spans):
        for c, d in spans[i + 1:]:
            if a < c < b < d or c < a < d < b:
                return False
    return True


def is_projective(tree: GoldTree) -> bool:
    """
    Check that no two arcs cross when drawn above the sentence

    The root arc counts as an arc from position 0.
    """
    return _arcs_projective(tree.heads)


def _scan_lines(lines: Iterable[str], source: str):
    """Check column structure and integer fields, reporting the line number"""
    for line_num, raw in enumerate(lines, 1):
        line = raw.rstrip('\r\n')
        if not line.strip() or line.startswith('#'):
            continue
        columns = line.split('\t')
        if len(columns) != 10:
            raise TreebankError(
                f"{source}:{line_num}: expected 10 tab-separated columns, found {len(columns)}"
            )
        token_id, head = columns[0], columns[6]
        if '-' in token_id or '.' in token_id:
            continue
        if not token_id.isdigit():
            raise TreebankError(f"{source}:{line_num}: invalid token id {token_id!r}")
        if head != '_' and not head.isdigit():
            raise TreebankError(f"{source}:{line_num}: invalid head {head!r}")


def _select_pos(token, pos_column: str) -> Optional[str]:
    if pos_column == 'upos':
        return token.upos
    if pos_column == 'xpos':
        return token.xpos
    return token.xpos if token.xpos not in (None, '_') else token.upos


def _convert_sentence(sentence, ordinal: int, pos_column: str, require_heads: bool) -> Tuple[str, List[Token]]:
    sent_id = sentence.id or str(ordinal)
    tokens = []
    for token in sentence:
        if token.is_multiword() or token.is_empty_node():
            continue
        pos = _select_pos(token, pos_column)
        if pos in (None, '_'):
            raise TreebankError(f"Sentence {sent_id}: token {token.id} has no POS tag in column {pos_column}")
        if token.head is None:
            if require_heads:
                raise TreebankError(f"Sentence {sent_id}: token {token.id} has no head")
            head = 0
        else:
            head = int(token.head)
        tokens.append(Token(
            index=int(token.id),
            form=token.form or '_',
            pos=pos,
            head=head,
            label=token.deprel or '_',
        ))
    return sent_id, tokens


def _load_corpus(source: Union[str, Path]):
    path = Path(source)
    if not path.is_file():
        raise TreebankError(f"CoNLL-U file not found: {path}")

    with open(path, encoding='utf-8') as handle:
        _scan_lines(handle, str(path))

    try:
        return pyconll.load_from_file(str(path))
    except ParseError as e:
        raise TreebankError(f"{path}: {e}") from e


def load_conllu(path: Union[str, Path], pos_column: str = 'auto') -> List[InputSentence]:
    """
    Load sentences for parsing; heads may be absent

    Args:
        path: CoNLL-U file
        pos_column: 'auto' (XPOS, falling back to UPOS), 'xpos' or 'upos'

    Returns:
        Sentences paired with their tokens
    """
    pos_column = validate_pos_column(pos_column)
    corpus = _load_corpus(path)

    sentences = []
    for ordinal, sentence in enumerate(corpus, 1):
        sent_id, tokens = _convert_sentence(sentence, ordinal, pos_column, require_heads=False)
        if tokens:
            sentences.append(InputSentence(sentence=sentence, tokens=tokens, sent_id=sent_id))
    return sentences


def read_predictions(path: Union[str, Path]) -> List[Dict[int, Tuple[int, str]]]:
    """
    Read a parser's output as dependent -> (head, label) maps

    No tree checks are made, so multiple roots or cycles are scored as they
    are. Multiword-token ranges and empty nodes are skipped.

    Raises:
        TreebankError: On malformed lines or a word without a head
    """
    corpus = _load_corpus(path)

    predictions = []
    for ordinal, sentence in enumerate(corpus, 1):
        sent_id = sentence.id or str(ordinal)
        heads = {}
        for token in sentence:
            if token.is_multiword() or token.is_empty_node():
                continue
            if token.head is None:
                raise TreebankError(f"Sentence {sent_id}: token {token.id} has no head")
            heads[int(token.id)] = (int(token.head), token.deprel or '_')
        if heads:
            predictions.append(heads)
    return predictions


def read_conllu(path: Union[str, Path], pos_column: str = 'auto') -> List[GoldTree]:
    """
    Read a CoNLL-U treebank into gold trees

    Multiword-token ranges and empty nodes are skipped. Non-projective
    sentences are kept and flagged.

    Args:
        path: CoNLL-U file
        pos_column: 'auto' (XPOS, falling back to UPOS), 'xpos' or 'upos'

    Returns:
        One GoldTree per sentence block

    Raises:
        TreebankError: On malformed lines, missing heads or POS, or
            structurally invalid trees
    """
    pos_column = validate_pos_column(pos_column)
    corpus = _load_corpus(path)

    trees = []
    for ordinal, sentence in enumerate(corpus, 1):
        sent_id, tokens = _convert_sentence(sentence, ordinal, pos_column, require_heads=True)
        if tokens:
            trees.append(GoldTree.from_tokens(tokens, sent_id=sent_id))

    non_projective = sum(1 for t in trees if not t.projective)
    logger.info(f"Read {len(trees)} sentences from {path} ({non_projective} non-projective)")
    return trees


def format_conllu(trees: Iterable[GoldTree]) -> str:
    """Render trees as CoNLL-U text (POS written to XPOS)"""
    blocks = []
    for tree in trees:
        lines = []
        if tree.sent_id:
            lines.append(f"# sent_id = {tree.sent_id}")
        for t in tree.tokens:
            lines.append('\t'.join([
                str(t.index), t.form, '_', '_', t.pos, '_', str(t.head), t.label, '_', '_',
            ]))
        blocks.append('\n'.join(lines) + '\n\n')
    return ''.join(blocks)


def write_conllu(sentences: Iterable, destination: Union[str, Path, TextIO]):
    """
    Write pyconll sentences (or InputSentence wrappers) as CoNLL-U

    Args:
        sentences: pyconll Sentence objects or InputSentence
        destination: Output path or an open text stream
    """
    text = ''.join(
        getattr(s, 'sentence', s).conll() + '\n\n'
        for s in sentences
    )

    if isinstance(destination, (str, Path)):
        with open(destination, 'w', encoding='utf-8') as handle:
            handle.write(text)
    else:
        destination.write(text)


def set_predictions(item: InputSentence, heads: Mapping[int, Tuple[int, str]]):
    """Replace HEAD/DEPREL of every word token; other columns are untouched"""
    for token in item.sentence:
        if token.is_multiword() or token.is_empty_node():
            continue
        head, label = heads[int(token.id)]
        token.head = str(head)
        token.deprel = label


def _ambiguous_heads(tree: GoldTree) -> List[int]:
    return [
        h for h in range(1, tree.n + 1)
        if tree.left_deps[h] and tree.right_deps[h]
    ]


def _covered_by(tree: GoldTree, marked: Iterable[int]) -> int:
    """Count tokens lying in the subtree (head inclusive) of any marked head"""
    marked = set(marked)
    covered: Dict[int, bool] = {ROOT: False}

    def lookup(node: int) -> bool:
        chain = []
        while node not in covered:
            if node in marked:
                covered[node] = True
                break
            chain.append(node)
            node = tree.heads[node]
        value = covered[node]
        for visited in chain:
            covered[visited] = value
        return value

    return sum(1 for i in range(1, tree.n + 1) if lookup(i))


def compute_stats(trees: Iterable[GoldTree], punct_tags: FrozenSet[str] = frozenset()) -> TreebankStats:
    """
    Compute left/right dependency and ambiguity counts

    Root words are counted in neither left_dep nor right_dep, so
    left_dep + right_dep = tokens - sentences.

    Args:
        trees: Valid gold trees
        punct_tags: POS tags counted as punctuation (reported separately)

    Returns:
        TreebankStats
    """
    counts = dict(sentences=0, tokens=0, left_dep=0, right_dep=0,
                  amb_sentences=0, amb_heads=0, amb_tokens=0, punct_tokens=0)

    for tree in trees:
        counts['sentences'] += 1
        counts['tokens'] += tree.n
        for token in tree.tokens:
            if token.head > token.index:
                counts['left_dep'] += 1
            elif ROOT < token.head < token.index:
                counts['right_dep'] += 1
            if token.pos in punct_tags:
                counts['punct_tokens'] += 1

        ambiguous = _ambiguous_heads(tree)
        if ambiguous:
            counts['amb_sentences'] += 1
            counts['amb_heads'] += len(ambiguous)
            counts['amb_tokens'] += _covered_by(tree, ambiguous)

    return TreebankStats(**counts)


def stats_table(named_stats: Mapping[str, TreebankStats]) -> pd.DataFrame:
    """One row per treebank in the order #sentences .. #amb. tokens"""
    rows = [[name] + stats.as_row() for name, stats in named_stats.items()]
    return pd.DataFrame(rows, columns=['split'] + STATS_COLUMNS)


def stats_tsv(named_stats: Mapping[str, TreebankStats]) -> str:
    buffer = io.StringIO()
    stats_table(named_stats).to_csv(buffer, sep='\t', index=False)
    return buffer.getvalue()
