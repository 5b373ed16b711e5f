"""
Trainer Module
Generates supervised configurations on the fly from the standard or hybrid
oracle, trains the classifier one sentence per Adam step, and keeps the
epoch with the best development UAS
"""

import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.advanced.evaluator import evaluate_model
from src.advanced.neural import (
    N_KINDS, AdamState, ModelDims, ModelParams, SentenceGraph, TargetDistribution,
    Vocab, backward_and_step, encode,
)
from src.core.oracle import OracleOutcome, oracle_walk
from src.core.transition_system import Configuration, Transition, TransitionKind, apply
from src.core.treebank import GoldTree
from src.utils.logger import log_metrics, setup_logger
from src.utils.validators import (
    ValidationError, validate_choice, validate_dropout, validate_oracle_kind,
    validate_positive_integer, validate_probability,
)

logger = setup_logger("Trainer")

SELECTION_METRICS = ('uas',)


class TrainingError(RuntimeError):
    """Training cannot start or produced an inconsistent oracle path"""
    pass


@dataclass(frozen=True)
class TrainConfig:
    """
    Resolved training configuration

    Defaults: embeddings 50, BiLSTM 200 per direction, hidden 200,
    dropout 0.5, Adam defaults, one sentence per update, 20 epochs.
    """

    oracle_kind: str = 'hybrid'
    explore: bool = True
    p_shift: float = 0.5
    epochs: int = 20
    seed: int = 1
    dropout: float = 0.5
    selection_metric: str = 'UAS'
    learning_rate: float = 0.001
    word_dropout: float = 0.5
    unk_threshold: int = 2
    word_dim: int = 50
    pos_dim: int = 50
    lstm_dim: int = 200
    hidden_dim: int = 200
    punct_tags: Tuple[str, ...] = ()
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'oracle_kind', validate_oracle_kind(self.oracle_kind))
        if self.explore and self.oracle_kind != 'hybrid':
            raise ValidationError("explore requires the hybrid oracle")

        validate_probability(self.p_shift, "p_shift")
        validate_positive_integer(self.epochs, "epochs")
        validate_dropout(self.dropout, "dropout")
        validate_dropout(self.word_dropout, "word_dropout")
        validate_choice(self.selection_metric, SELECTION_METRICS, "selection metric")
        if not self.learning_rate > 0:
            raise ValidationError(f"Invalid learning_rate: {self.learning_rate}. Must be greater than 0")
        validate_positive_integer(self.unk_threshold, "unk_threshold")
        for name in ('word_dim', 'pos_dim', 'lstm_dim', 'hidden_dim', 'threads'):
            validate_positive_integer(getattr(self, name), name)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError(f"Invalid seed: {self.seed}. Must be an integer")

        object.__setattr__(self, 'punct_tags', tuple(sorted(set(self.punct_tags))))

    @property
    def dims(self) -> Dict[str, int]:
        return dict(word_dim=self.word_dim, pos_dim=self.pos_dim,
                    lstm_dim=self.lstm_dim, hidden_dim=self.hidden_dim)

    @property
    def effective_p_shift(self) -> float:
        """Without exploration the hybrid oracle always prefers larc"""
        return self.p_shift if self.explore else 0.0

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['punct_tags'] = list(self.punct_tags)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"Unknown training options: {unknown}")
        values = dict(data)
        if 'punct_tags' in values:
            values['punct_tags'] = tuple(values['punct_tags'])
        return cls(**values)


@dataclass(frozen=True)
class SentenceResult:
    loss: float
    path: Tuple[Transition, ...]
    ambiguous_steps: int


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    uas: float
    las: float
    uem: float
    wall_time: float
    sentences: int
    ambiguous_steps: int


@dataclass
class TrainResult:
    params: ModelParams
    vocab: Vocab
    adam: AdamState
    history: List[EpochMetrics] = field(default_factory=list)
    best_epoch: int = 0
    skipped: int = 0


class MetricsLog:
    """Per-epoch metrics, one JSON object per line"""

    def __init__(self, path: Optional[Union[str, Path]]):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text('', encoding='utf-8')

    def append(self, metrics: EpochMetrics):
        if not self.path:
            return
        with open(self.path, 'a', encoding='utf-8') as handle:
            handle.write(json.dumps(asdict(metrics), sort_keys=True) + '\n')


class Trainer:
    """Owns the model, vocabulary, optimizer state and the run's random stream"""

    def __init__(
        self,
        config: TrainConfig,
        vocab: Vocab,
        params: Optional[ModelParams] = None,
        adam: Optional[AdamState] = None,
    ):
        self.config = config
        self.vocab = vocab
        self.rng = np.random.default_rng(config.seed)
        self.params = params or ModelParams.initialize(ModelDims.for_vocab(vocab, **config.dims), self.rng)
        self.adam = adam or AdamState(lr=config.learning_rate)
        self.skipped = 0
        logger.info(
            f"Trainer initialized - oracle: {config.oracle_kind}, explore: {config.explore}, "
            f"p_shift: {config.effective_p_shift}, seed: {config.seed}"
        )

    def oracle_path(self, tree: GoldTree) -> List[Tuple[Configuration, OracleOutcome]]:
        """
        Supervised configurations for one sentence

        Standard oracle: the deterministic larc-first path with one-hot targets.
        Hybrid oracle: every correct transition is a target; with exploration
        the ambiguous choice is random, otherwise larc is taken.

        Raises:
            TrainingError: If the path does not rebuild exactly the gold arcs
        """
        if self.config.oracle_kind == 'standard':
            steps = oracle_walk(tree, standard=True)
        else:
            steps = oracle_walk(tree, self.rng, p_shift=self.config.effective_p_shift)

        last_config, last_outcome = steps[-1]
        final = apply(last_config, last_outcome.chosen)
        built = {(a.head, a.label, a.dependent) for a in final.arcs}
        gold = {(t.head, t.label, t.index) for t in tree.tokens}
        if built != gold:
            raise TrainingError(f"Oracle path for sentence {tree.sent_id} did not rebuild the gold tree")
        return steps

    def train_sentence(self, tree: GoldTree) -> Optional[SentenceResult]:
        """
        Run one sentence: oracle path, summed loss, one Adam step

        Returns:
            SentenceResult, or None when the tree is non-projective (counted
            in self.skipped)
        """
        if not tree.projective:
            self.skipped += 1
            logger.debug(f"Skipping non-projective sentence {tree.sent_id}")
            return None

        config = self.config
        steps = self.oracle_path(tree)
        encoding = encode(
            tree.tokens, self.params, self.vocab, train_mode=True, rng=self.rng,
            dropout=config.dropout, word_dropout=config.word_dropout,
            unk_threshold=config.unk_threshold,
        )

        graph = SentenceGraph(self.params, encoding)
        for configuration, outcome in steps:
            target = TargetDistribution.uniform([t.kind for t in outcome.correct_set], N_KINDS)
            label_id = None
            if outcome.chosen.kind != TransitionKind.SHIFT:
                if outcome.chosen.label not in self.vocab.label_to_id:
                    raise TrainingError(f"Label '{outcome.chosen.label}' is not in the model's label inventory")
                label_id = self.vocab.label_id(outcome.chosen.label)
            graph.add_step(configuration, target, label_id)

        loss = graph.forward()
        backward_and_step(graph, self.params, self.adam)

        return SentenceResult(
            loss=loss,
            path=tuple(outcome.chosen for _, outcome in steps),
            ambiguous_steps=sum(1 for _, outcome in steps if outcome.ambiguous),
        )

    def train_epoch(self, trees: Sequence[GoldTree]) -> Tuple[float, int]:
        """Shuffle with the run's random stream and train every sentence once"""
        order = self.rng.permutation(len(trees))
        losses, ambiguous = [], 0
        for index in order:
            result = self.train_sentence(trees[index])
            if result is not None:
                losses.append(result.loss)
                ambiguous += result.ambiguous_steps
        return (float(np.mean(losses)) if losses else 0.0), ambiguous


def train(
    treebank: Sequence[GoldTree],
    dev_treebank: Sequence[GoldTree],
    config: TrainConfig,
    vocab: Optional[Vocab] = None,
    params: Optional[ModelParams] = None,
    adam: Optional[AdamState] = None,
    metrics_path: Optional[Union[str, Path]] = None,
) -> TrainResult:
    """
    Train for config.epochs epochs and return the best-dev-UAS parameters

    Args:
        treebank: Training trees; non-projective ones are skipped
        dev_treebank: Development trees decoded after every epoch
        config: Training configuration
        vocab, params, adam: Resume from a saved model instead of starting fresh
        metrics_path: Optional JSONL file for per-epoch metrics

    Returns:
        TrainResult holding the parameters and Adam state of the best epoch
        (ties go to the earlier epoch)

    Raises:
        TrainingError: If no projective training sentence or no dev sentence exists
    """
    projective = [t for t in treebank if t.projective]
    skipped = len(treebank) - len(projective)
    if not projective:
        raise TrainingError("Training set has no projective sentences")
    if not dev_treebank:
        raise TrainingError("Development set is empty")
    if skipped:
        logger.warning(f"Skipping {skipped} non-projective training sentences")

    vocab = vocab or Vocab.build(projective)
    trainer = Trainer(config, vocab, params, adam)
    punct_tags: FrozenSet[str] = frozenset(config.punct_tags)
    metrics_log = MetricsLog(metrics_path)

    result = TrainResult(params=trainer.params.copy(), vocab=vocab, adam=trainer.adam.copy(), skipped=skipped)
    best_uas = None

    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        train_loss, ambiguous = trainer.train_epoch(projective)
        report = evaluate_model(dev_treebank, trainer.params, vocab, punct_tags, config.threads)

        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=train_loss,
            uas=report.uas,
            las=report.las,
            uem=report.uem,
            wall_time=time.perf_counter() - start,
            sentences=len(projective),
            ambiguous_steps=ambiguous,
        )
        result.history.append(metrics)
        metrics_log.append(metrics)
        log_metrics(logger, "EPOCH", epoch=epoch, train_loss=train_loss, uas=report.uas,
                    las=report.las, uem=report.uem, wall_time=metrics.wall_time)

        if best_uas is None or report.uas > best_uas:
            best_uas = report.uas
            result.params = trainer.params.copy()
            result.adam = trainer.adam.copy()
            result.best_epoch = epoch

    logger.info(f"Best epoch: {result.best_epoch} (dev UAS {best_uas:.2f})")
    return result
