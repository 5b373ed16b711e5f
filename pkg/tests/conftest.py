"""Shared fixtures: small gold trees, projective tree generators, micro models"""

import itertools
from typing import Dict, Iterator, List

import numpy as np
import pytest

from src.advanced.neural import ModelDims, ModelParams, Vocab
from src.core.treebank import GoldTree, format_conllu

MICRO_DIMS = dict(word_dim=3, pos_dim=2, lstm_dim=3, hidden_dim=4)


def phrase_tree() -> GoldTree:
    """在 文 中: 文 is the root, 在 and 中 are its case-marking dependents"""
    return GoldTree.from_heads(
        [2, 0, 2],
        labels=['case', 'root', 'case'],
        forms=['在', '文', '中'],
        pos=['P', 'NN', 'LC'],
        sent_id='zwz',
    )


def flat_tree(left: int, right: int) -> GoldTree:
    """One head with `left` dependents before it and `right` after it"""
    head = left + 1
    heads = [head] * left + [0] + [head] * right
    return GoldTree.from_heads(heads, sent_id=f'flat-{left}-{right}')


def chain_tree(n: int) -> GoldTree:
    """Purely left-branching: every word depends on the next one"""
    return GoldTree.from_heads([i + 1 for i in range(1, n)] + [0], sent_id=f'chain-{n}')


def _spans(i: int, j: int, head: int) -> Iterator[Dict[int, int]]:
    """Every projective forest over tokens i..j whose roots attach to head"""
    if i > j:
        yield {}
        return
    for end in range(i, j + 1):
        for root in range(i, end + 1):
            for left in _spans(i, root - 1, root):
                for right in _spans(root + 1, end, root):
                    for rest in _spans(end + 1, j, head):
                        yield {root: head, **left, **right, **rest}


def projective_forests(n: int) -> Iterator[Dict[int, int]]:
    """Every projective head assignment over 1..n where ROOT may take several words"""
    return _spans(1, n, 0)


def projective_head_arrays(n: int) -> Iterator[List[int]]:
    for root in range(1, n + 1):
        for left in _spans(1, root - 1, root):
            for right in _spans(root + 1, n, root):
                assignment = {root: 0, **left, **right}
                yield [assignment[i] for i in range(1, n + 1)]


def projective_trees(n: int) -> Iterator[GoldTree]:
    for heads in projective_head_arrays(n):
        yield GoldTree.from_heads(heads)


def brute_force_projective(n: int) -> List[List[int]]:
    """All single-rooted, acyclic, projective head arrays by exhaustive search"""
    found = []
    for heads in itertools.product(range(n + 1), repeat=n):
        if any(h == i + 1 for i, h in enumerate(heads)) or list(heads).count(0) != 1:
            continue
        try:
            tree = GoldTree.from_heads(list(heads))
        except ValueError:
            continue
        if tree.projective:
            found.append(list(heads))
    return found


def random_projective_tree(n: int, rng: np.random.Generator, sent_id: str = '') -> GoldTree:
    heads = [0] * (n + 1)

    def fill(i: int, j: int, head: int):
        while i <= j:
            end = int(rng.integers(i, j + 1))
            root = int(rng.integers(i, end + 1))
            heads[root] = head
            fill(i, root - 1, root)
            fill(root + 1, end, root)
            i = end + 1

    root = int(rng.integers(1, n + 1))
    heads[root] = 0
    fill(1, root - 1, root)
    fill(root + 1, n, root)

    labels = ['root' if h == 0 else ('nmod' if h > d else 'obj') for d, h in enumerate(heads) if d > 0]
    pos = [f'T{d % 4}' for d in range(1, n + 1)]
    forms = [f'w{int(rng.integers(0, 20))}' for _ in range(n)]
    return GoldTree.from_heads(heads[1:], labels=labels, forms=forms, pos=pos, sent_id=sent_id)


def write_conllu_file(path, trees) -> str:
    path.write_text(format_conllu(trees), encoding='utf-8')
    return str(path)


@pytest.fixture
def phrase():
    return phrase_tree()


@pytest.fixture
def micro_model(phrase):
    """float64 micro model over the three-word phrase, for gradient checks"""
    vocab = Vocab.build([phrase])
    dims = ModelDims.for_vocab(vocab, **MICRO_DIMS)
    params = ModelParams.initialize(dims, np.random.default_rng(7), dtype=np.float64)
    return params, vocab
