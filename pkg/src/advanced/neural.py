"""
Neural Classifier Module
Word/POS embeddings, a one-layer BiLSTM encoder, two feed-forward heads
(transition kind and arc label), soft-target cross-entropy, hand-written
reverse-mode gradients, Adam updates, and the model file format
"""

import hashlib
import json
import struct
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.transition_system import Configuration
from src.core.treebank import GoldTree, Token
from src.utils.logger import setup_logger

logger = setup_logger("Neural")

UNK = '<unk>'
N_KINDS = 3
LOG_FLOOR = 1e-12

MAGIC = b'NNDEPMDL'
FORMAT_VERSION = 1
_HEADER = struct.Struct('<8sIQ')
_CHECKSUM_BYTES = 32


class NumericalError(RuntimeError):
    """A gradient or parameter became NaN or infinite"""
    pass


class ModelFormatError(ValueError):
    """A model file could not be read"""
    pass


@dataclass
class Vocab:
    """Id tables for words, POS tags and relation labels"""

    word_to_id: Dict[str, int]
    pos_to_id: Dict[str, int]
    label_to_id: Dict[str, int]
    word_freq: Dict[str, int] = field(default_factory=dict)

    @classmethod
    def build(cls, trees: Iterable[GoldTree]) -> "Vocab":
        words: Counter = Counter()
        tags, labels = set(), set()
        for tree in trees:
            for token in tree.tokens:
                words[token.form] += 1
                tags.add(token.pos)
                labels.add(token.label)

        return cls(
            word_to_id={w: i for i, w in enumerate([UNK] + sorted(words))},
            pos_to_id={p: i for i, p in enumerate([UNK] + sorted(tags))},
            label_to_id={l: i for i, l in enumerate(sorted(labels))},
            word_freq=dict(words),
        )

    @property
    def labels(self) -> List[str]:
        return sorted(self.label_to_id, key=self.label_to_id.get)

    def word_id(self, word: str) -> int:
        return self.word_to_id.get(word, 0)

    def pos_id(self, pos: str) -> int:
        return self.pos_to_id.get(pos, 0)

    def label_id(self, label: str) -> int:
        return self.label_to_id[label]

    def to_dict(self) -> Dict:
        words = sorted(self.word_to_id, key=self.word_to_id.get)
        return {
            'words': words,
            'word_freq': [self.word_freq.get(w, 0) for w in words],
            'pos': sorted(self.pos_to_id, key=self.pos_to_id.get),
            'labels': self.labels,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Vocab":
        return cls(
            word_to_id={w: i for i, w in enumerate(data['words'])},
            pos_to_id={p: i for i, p in enumerate(data['pos'])},
            label_to_id={l: i for i, l in enumerate(data['labels'])},
            word_freq={w: f for w, f in zip(data['words'], data['word_freq']) if f},
        )


@dataclass(frozen=True)
class ModelDims:
    n_words: int
    n_pos: int
    n_labels: int
    word_dim: int = 50
    pos_dim: int = 50
    lstm_dim: int = 200
    hidden_dim: int = 200

    @property
    def input_dim(self) -> int:
        return self.word_dim + self.pos_dim

    @property
    def context_dim(self) -> int:
        return 2 * self.lstm_dim

    @property
    def feature_dim(self) -> int:
        return 3 * self.context_dim

    @classmethod
    def for_vocab(cls, vocab: Vocab, **sizes) -> "ModelDims":
        return cls(
            n_words=len(vocab.word_to_id),
            n_pos=len(vocab.pos_to_id),
            n_labels=len(vocab.label_to_id),
            **sizes,
        )

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        h, d, f, k = self.lstm_dim, self.input_dim, self.feature_dim, self.hidden_dim
        return {
            'word_emb': (self.n_words, self.word_dim),
            'pos_emb': (self.n_pos, self.pos_dim),
            'fw_Wx': (4 * h, d),
            'fw_Wh': (4 * h, h),
            'fw_b': (4 * h,),
            'bw_Wx': (4 * h, d),
            'bw_Wh': (4 * h, h),
            'bw_b': (4 * h,),
            'root_vec': (self.context_dim,),
            'pad_vec': (self.context_dim,),
            'trans_W1': (k, f),
            'trans_b1': (k,),
            'trans_W2': (N_KINDS, k),
            'trans_b2': (N_KINDS,),
            'label_W1': (k, f),
            'label_b1': (k,),
            'label_W2': (self.n_labels, k),
            'label_b2': (self.n_labels,),
        }


_EMBEDDINGS = ('word_emb', 'pos_emb', 'root_vec', 'pad_vec')


class ModelParams:
    """Parameter blocks with matching gradient buffers"""

    def __init__(self, dims: ModelDims, values: Dict[str, np.ndarray]):
        self.dims = dims
        self.values = values
        self.grads = {name: np.zeros_like(v) for name, v in values.items()}

    @classmethod
    def initialize(cls, dims: ModelDims, rng: np.random.Generator, dtype=np.float32) -> "ModelParams":
        """
        Embeddings ~ U(-0.1, 0.1), dense weights Xavier-uniform, biases zero
        with the LSTM forget-gate bias set to 1
        """
        values = {}
        for name, shape in dims.shapes().items():
            if name in _EMBEDDINGS:
                block = rng.uniform(-0.1, 0.1, shape)
            elif len(shape) == 2:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                block = rng.uniform(-limit, limit, shape)
            else:
                block = np.zeros(shape)
            values[name] = block.astype(dtype)

        h = dims.lstm_dim
        values['fw_b'][h:2 * h] = 1.0
        values['bw_b'][h:2 * h] = 1.0
        return cls(dims, values)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    @property
    def dtype(self):
        return self.values['trans_W1'].dtype

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {name: v.copy() for name, v in self.values.items()})

    def check_finite(self):
        """
        Raises:
            NumericalError: Naming the first block with a non-finite gradient
        """
        for name, g in self.grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"Non-finite gradient in parameter block '{name}'")


@dataclass
class AdamState:
    """Adam moments; defaults are the usual alpha=0.001, beta1=0.9, beta2=0.999, eps=1e-8"""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: ModelParams):
        self.t += 1

        # bias corrections computed once per step
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        step_size = self.lr / bc1

        for name, value in params.values.items():
            g = params.grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(value)
                self.v[name] = np.zeros_like(value)

            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)

            value -= step_size * m / (np.sqrt(v * (1.0 / bc2)) + self.epsilon)

    def copy(self) -> "AdamState":
        return AdamState(
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon, t=self.t,
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
        )


@dataclass(frozen=True)
class TargetDistribution:
    """Uniform probability over the correct classes"""

    probs: np.ndarray

    def __post_init__(self):
        probs = self.probs
        if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
            raise ValueError(f"Target is not a distribution: {probs}")
        support = probs[probs > 0]
        if not np.allclose(support, 1.0 / len(support)):
            raise ValueError(f"Target is not uniform over its support: {probs}")

    @classmethod
    def uniform(cls, support: Iterable[int], size: int) -> "TargetDistribution":
        support = sorted(set(support))
        if not support:
            raise ValueError("Target support cannot be empty")
        probs = np.zeros(size)
        probs[support] = 1.0 / len(support)
        return cls(probs)

    @property
    def support(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.probs)]


def soft_cross_entropy(probs: np.ndarray, target: Union[TargetDistribution, np.ndarray]) -> float:
    """Cross-entropy -sum(y_i * log p_i), with p clamped at 1e-12"""
    y = target.probs if isinstance(target, TargetDistribution) else np.asarray(target)
    p = np.maximum(np.asarray(probs, dtype=np.float64), LOG_FLOOR)
    return float(-np.sum(y * np.log(p)))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class _LSTMCache(NamedTuple):
    xs: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tc: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    order: List[int]


def _lstm_forward(xs: np.ndarray, Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray, reverse: bool):
    """Run one direction; gate rows are ordered input, forget, candidate, output"""
    n = xs.shape[0]
    H = Wh.shape[1]
    projected = xs @ Wx.T + b
    order = list(range(n - 1, -1, -1)) if reverse else list(range(n))

    shape = (n, H)
    i_, f_, g_, o_, c_, tc_, hp_, cp_, hs = (np.zeros(shape, dtype=xs.dtype) for _ in range(9))
    h = np.zeros(H, dtype=xs.dtype)
    c = np.zeros(H, dtype=xs.dtype)

    for t in order:
        z = projected[t] + Wh @ h
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        hp_[t], cp_[t] = h, c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        i_[t], f_[t], g_[t], o_[t], c_[t], tc_[t], hs[t] = i, f, g, o, c, tc, h

    return hs, _LSTMCache(xs, i_, f_, g_, o_, c_, tc_, hp_, cp_, order)


def _lstm_backward(dhs: np.ndarray, cache: _LSTMCache, Wx: np.ndarray, Wh: np.ndarray,
                   gWx: np.ndarray, gWh: np.ndarray, gb: np.ndarray) -> np.ndarray:
    """Backpropagate through time; accumulates weight gradients and returns d(inputs)"""
    n, H = dhs.shape
    dZ = np.zeros((n, 4 * H), dtype=dhs.dtype)
    dh_next = np.zeros(H, dtype=dhs.dtype)
    dc_next = np.zeros(H, dtype=dhs.dtype)

    for t in reversed(cache.order):
        i, f, g, o, tc = cache.i[t], cache.f[t], cache.g[t], cache.o[t], cache.tc[t]
        dh = dhs[t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * cache.c_prev[t]
        dc_next = dc * f

        dz = dZ[t]
        dz[:H] = di * i * (1.0 - i)
        dz[H:2 * H] = df * f * (1.0 - f)
        dz[2 * H:3 * H] = dg * (1.0 - g * g)
        dz[3 * H:] = do * o * (1.0 - o)

        gWh += np.outer(dz, cache.h_prev[t])
        dh_next = Wh.T @ dz

    gWx += dZ.T @ cache.xs
    gb += dZ.sum(axis=0)
    return dZ @ Wx


@dataclass
class Encoding:
    """
    Context vectors for ROOT (row 0), the words (rows 1..n) and the empty-slot
    sentinel (row n+1)
    """

    table: np.ndarray
    word_ids: np.ndarray
    pos_ids: np.ndarray
    mask: Optional[np.ndarray]
    fw_cache: _LSTMCache
    bw_cache: _LSTMCache

    @property
    def n(self) -> int:
        return self.table.shape[0] - 2

    @property
    def vectors(self) -> np.ndarray:
        """ROOT + word vectors, without the sentinel row"""
        return self.table[:-1]


def encode(
    sentence: Sequence[Token],
    params: ModelParams,
    vocab: Vocab,
    train_mode: bool = False,
    rng: Optional[np.random.Generator] = None,
    dropout: float = 0.5,
    word_dropout: float = 0.0,
    unk_threshold: int = 2,
) -> Encoding:
    """
    Encode a sentence with the BiLSTM

    Args:
        sentence: Tokens (forms and POS tags are looked up, unknowns map to UNK)
        params: Model parameters
        vocab: Vocabulary
        train_mode: Apply dropout to the BiLSTM output and word dropout
        rng: Random source, required in train_mode
        dropout: Rate for the BiLSTM output (inverted scaling)
        word_dropout: Probability of replacing a rare word by UNK
        unk_threshold: Words seen fewer times than this count as rare

    Returns:
        Encoding with n+1 context vectors of size 2*lstm_dim plus the sentinel
    """
    v = params.values
    dims = params.dims

    word_ids = np.array([vocab.word_id(t.form) for t in sentence], dtype=np.int64)
    pos_ids = np.array([vocab.pos_id(t.pos) for t in sentence], dtype=np.int64)

    if train_mode and word_dropout > 0.0:
        for k, token in enumerate(sentence):
            if vocab.word_freq.get(token.form, 0) < unk_threshold and rng.random() < word_dropout:
                word_ids[k] = 0

    xs = np.concatenate([v['word_emb'][word_ids], v['pos_emb'][pos_ids]], axis=1)
    h_fw, fw_cache = _lstm_forward(xs, v['fw_Wx'], v['fw_Wh'], v['fw_b'], reverse=False)
    h_bw, bw_cache = _lstm_forward(xs, v['bw_Wx'], v['bw_Wh'], v['bw_b'], reverse=True)
    out = np.concatenate([h_fw, h_bw], axis=1)

    mask = None
    if train_mode and dropout > 0.0:
        keep = 1.0 - dropout
        mask = ((rng.random(out.shape) < keep) / keep).astype(out.dtype)
        out = out * mask

    table = np.vstack([v['root_vec'][None, :], out, v['pad_vec'][None, :]])
    assert table.shape == (len(sentence) + 2, dims.context_dim)
    return Encoding(table, word_ids, pos_ids, mask, fw_cache, bw_cache)


def feature_slots(c: Configuration) -> Tuple[int, int, int]:
    """Table rows for s1, s0, b0; missing slots use the sentinel row n+1"""
    pad = c.n + 1
    s1 = c.s1 if c.s1 is not None else pad
    s0 = c.s0 if c.s0 is not None else pad
    b0 = c.b0 if c.b0 is not None else pad
    return s1, s0, b0


class _HeadCache(NamedTuple):
    feats: np.ndarray
    a: np.ndarray
    r: np.ndarray
    probs: np.ndarray


def _head_forward(feats: np.ndarray, params: ModelParams, prefix: str) -> _HeadCache:
    v = params.values
    a = feats @ v[f'{prefix}_W1'].T + v[f'{prefix}_b1']
    r = np.maximum(a, 0.0)
    logits = r @ v[f'{prefix}_W2'].T + v[f'{prefix}_b2']
    return _HeadCache(feats, a, r, softmax(logits))


def _head_backward(dlogits: np.ndarray, cache: _HeadCache, params: ModelParams, prefix: str) -> np.ndarray:
    v, g = params.values, params.grads
    g[f'{prefix}_W2'] += dlogits.T @ cache.r
    g[f'{prefix}_b2'] += dlogits.sum(axis=0)
    da = (dlogits @ v[f'{prefix}_W2']) * (cache.a > 0)
    g[f'{prefix}_W1'] += da.T @ cache.feats
    g[f'{prefix}_b1'] += da.sum(axis=0)
    return da @ v[f'{prefix}_W1']


def _gather(encoding: Encoding, slots: np.ndarray) -> np.ndarray:
    """(T, 3) row ids -> (T, 3 * context_dim) features"""
    return encoding.table[slots].reshape(slots.shape[0], -1)


def score(c: Configuration, encodings: Encoding, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Classify a configuration

    Both heads read the same features: the context vectors of s1, s0, b0.

    Returns:
        (probabilities over shift/larc/rarc, probabilities over labels)
    """
    feats = _gather(encodings, np.array([feature_slots(c)]))
    trans = _head_forward(feats, params, 'trans')
    label = _head_forward(feats, params, 'label')
    return trans.probs[0], label.probs[0]


class SentenceGraph:
    """
    Recorded forward pass of one sentence: the encoding, the feature slots of
    every supervised step, and their targets. The loss is the sum over steps.
    """

    def __init__(self, params: ModelParams, encoding: Encoding):
        self.params = params
        self.encoding = encoding
        self.slots: List[Tuple[int, int, int]] = []
        self.trans_targets: List[np.ndarray] = []
        self.label_rows: List[int] = []
        self.label_ids: List[int] = []
        self._trans: Optional[_HeadCache] = None
        self._label: Optional[_HeadCache] = None
        self.loss: Optional[float] = None

    def add_step(self, c: Configuration, target: TargetDistribution, label_id: Optional[int] = None):
        """Record one configuration; label_id is given only at arc steps"""
        if label_id is not None:
            self.label_rows.append(len(self.slots))
            self.label_ids.append(label_id)
        self.slots.append(feature_slots(c))
        self.trans_targets.append(target.probs)

    @property
    def steps(self) -> int:
        return len(self.slots)

    def forward(self) -> float:
        slots = np.array(self.slots, dtype=np.int64).reshape(-1, 3)
        feats = _gather(self.encoding, slots)
        self._slots = slots
        self._trans = _head_forward(feats, self.params, 'trans')
        targets = np.array(self.trans_targets, dtype=np.float64).reshape(-1, N_KINDS)

        loss = sum(soft_cross_entropy(p, y) for p, y in zip(self._trans.probs, targets))

        if self.label_rows:
            self._label = _head_forward(feats[self.label_rows], self.params, 'label')
            picked = self._label.probs[np.arange(len(self.label_ids)), self.label_ids]
            loss += float(-np.sum(np.log(np.maximum(picked.astype(np.float64), LOG_FLOOR))))

        self.loss = float(loss)
        return self.loss

    def backward(self):
        """Accumulate gradients of the summed loss into params.grads"""
        if self.loss is None:
            self.forward()

        params, enc = self.params, self.encoding
        g, v, dims = params.grads, params.values, params.dims
        dtype = self._trans.probs.dtype

        targets = np.array(self.trans_targets, dtype=dtype).reshape(-1, N_KINDS)
        dfeats = _head_backward(self._trans.probs - targets, self._trans, params, 'trans')

        if self.label_rows:
            one_hot = np.zeros_like(self._label.probs)
            one_hot[np.arange(len(self.label_ids)), self.label_ids] = 1.0
            dlabel = _head_backward(self._label.probs - one_hot, self._label, params, 'label')
            np.add.at(dfeats, self.label_rows, dlabel)

        dtable = np.zeros_like(enc.table)
        np.add.at(dtable, self._slots, dfeats.reshape(self._slots.shape[0], 3, dims.context_dim))

        n = enc.n
        g['root_vec'] += dtable[0]
        g['pad_vec'] += dtable[n + 1]
        dout = dtable[1:n + 1]
        if enc.mask is not None:
            dout = dout * enc.mask

        H = dims.lstm_dim
        dxs = _lstm_backward(dout[:, :H], enc.fw_cache, v['fw_Wx'], v['fw_Wh'], g['fw_Wx'], g['fw_Wh'], g['fw_b'])
        dxs += _lstm_backward(dout[:, H:], enc.bw_cache, v['bw_Wx'], v['bw_Wh'], g['bw_Wx'], g['bw_Wh'], g['bw_b'])

        np.add.at(g['word_emb'], enc.word_ids, dxs[:, :dims.word_dim])
        np.add.at(g['pos_emb'], enc.pos_ids, dxs[:, dims.word_dim:])


def backward_and_step(graph: SentenceGraph, params: ModelParams, adam: AdamState) -> ModelParams:
    """
    Backpropagate the sentence loss and apply one Adam update

    Raises:
        NumericalError: If any gradient block is non-finite (parameters are
            left untouched)
    """
    params.zero_grad()
    graph.backward()
    params.check_finite()
    adam.step(params)
    return params


class LoadedModel(NamedTuple):
    params: ModelParams
    vocab: Vocab
    adam: Optional[AdamState]


def save_model(params: ModelParams, vocab: Vocab, path: Union[str, Path], adam: Optional[AdamState] = None):
    """
    Write the model container: magic, version, JSON header (dims, vocab,
    shape manifest, Adam scalars), little-endian float32 blobs, optional Adam
    moments, and a SHA-256 checksum of everything before it
    """
    if params.dtype != np.float32:
        logger.warning(f"Parameters are {params.dtype}; saving as float32")

    names = list(params.dims.shapes())
    blobs = [params.values[name] for name in names]
    adam_header = None
    if adam is not None and adam.m:
        adam_header = {'lr': adam.lr, 'beta1': adam.beta1, 'beta2': adam.beta2,
                       'epsilon': adam.epsilon, 't': adam.t}
        blobs += [adam.m[name] for name in names] + [adam.v[name] for name in names]

    header = {
        'dims': asdict(params.dims),
        'vocab': vocab.to_dict(),
        'blocks': [{'name': name, 'shape': list(params.dims.shapes()[name])} for name in names],
        'adam': adam_header,
        'dtype': '<f4',
    }
    header_bytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode('utf-8')

    body = bytearray(_HEADER.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
    body += header_bytes
    for blob in blobs:
        body += np.ascontiguousarray(blob, dtype='<f4').tobytes()
    body += hashlib.sha256(bytes(body)).digest()

    Path(path).write_bytes(bytes(body))
    logger.debug(f"Model saved to {path} ({len(body)} bytes)")


def load_model(path: Union[str, Path]) -> LoadedModel:
    """
    Read a model written by save_model

    Raises:
        ModelFormatError: On bad magic, unsupported version, truncation, or
            checksum mismatch
    """
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"Model file not found: {path}")
    data = path.read_bytes()

    if len(data) < _HEADER.size + _CHECKSUM_BYTES:
        raise ModelFormatError(f"{path}: file is truncated")

    magic, version, header_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}")

    body, checksum = data[:-_CHECKSUM_BYTES], data[-_CHECKSUM_BYTES:]
    if hashlib.sha256(body).digest() != checksum:
        raise ModelFormatError(f"{path}: checksum mismatch (file is corrupted or truncated)")

    offset = _HEADER.size
    try:
        header = json.loads(body[offset:offset + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"{path}: unreadable header") from e
    offset += header_len

    dims = ModelDims(**header['dims'])
    blocks = [(b['name'], tuple(b['shape'])) for b in header['blocks']]

    def read_blocks() -> Dict[str, np.ndarray]:
        nonlocal offset
        arrays = {}
        for name, shape in blocks:
            size = int(np.prod(shape)) * 4
            if offset + size > len(body):
                raise ModelFormatError(f"{path}: file is truncated in block '{name}'")
            arrays[name] = np.frombuffer(body, dtype='<f4', count=size // 4, offset=offset).reshape(shape).astype(np.float32)
            offset += size
        return arrays

    params = ModelParams(dims, read_blocks())
    adam = None
    if header['adam'] is not None:
        adam = AdamState(**header['adam'])
        adam.m = read_blocks()
        adam.v = read_blocks()

    if offset != len(body):
        raise ModelFormatError(f"{path}: {len(body) - offset} unexpected trailing bytes")

    vocab = Vocab.from_dict(header['vocab'])
    sizes = (len(vocab.word_to_id), len(vocab.pos_to_id), len(vocab.label_to_id))
    if sizes != (dims.n_words, dims.n_pos, dims.n_labels):
        raise ModelFormatError(
            f"{path}: vocabulary sizes {sizes} do not match the model "
            f"({dims.n_words}, {dims.n_pos}, {dims.n_labels})"
        )

    return LoadedModel(params, vocab, adam)
