"""
Command-line entry point

    python -m src.cli train     --train TRAIN.conllu --dev DEV.conllu --model out/model.bin
    python -m src.cli parse     --model out/model.bin --input IN.conllu --output OUT.conllu
    python -m src.cli eval      --gold GOLD.conllu --pred A.conllu [--pred B.conllu]
    python -m src.cli stats     --input TRAIN.conllu [--input DEV.conllu]
    python -m src.cli enumerate --input GOLD.conllu [--limit 64]

Every command writes one run manifest (resolved configuration, seed, input
digests, tool version). Configuration precedence: flags > --config > defaults.
"""

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from tabulate import tabulate

from src import __version__
from src.advanced.evaluator import (
    PUNCT_PRESETS, EvaluationError, arc_length_table, arcs_to_prediction,
    decode_all, score, summary_table,
)
from src.advanced.neural import ModelFormatError, NumericalError, load_model, save_model
from src.advanced.trainer import TrainConfig, TrainingError, train
from src.core.oracle import OracleError, enumerate_sequences
from src.core.transition_system import TransitionError, render
from src.core.treebank import (
    TreebankError, compute_stats, load_conllu, read_conllu, read_predictions, set_predictions,
    stats_table, write_conllu,
)
from src.utils.logger import log_error, log_metrics, setup_logger
from src.utils.settings import get_settings
from src.utils.validators import (
    ValidationError, validate_existing_file, validate_pos_column,
    validate_positive_integer, validate_punct_preset,
)

logger = setup_logger("CLI")

DEFAULT_PUNCT_PRESET = 'ud-zh'
RUNS_DIR = Path('runs')

HANDLED_ERRORS = (
    ValidationError, TreebankError, TransitionError, OracleError, NumericalError,
    ModelFormatError, EvaluationError, TrainingError, OSError,
)


@dataclass
class RunManifest:
    """Everything needed to re-run a command"""

    command: str
    config: Dict
    seed: Optional[int] = None
    inputs: Dict[str, str] = field(default_factory=dict)
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, ensure_ascii=False)

    def write(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + '\n', encoding='utf-8')
        logger.info(f"Manifest written to {path}")


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _digests(paths: Sequence[Path]) -> Dict[str, str]:
    return {str(p): file_digest(p) for p in paths}


def _manifest_path(args, primary_output: Optional[Path]) -> Path:
    if args.manifest:
        return Path(args.manifest)
    if primary_output is not None:
        return primary_output.with_name(primary_output.name + '.manifest.json')
    return RUNS_DIR / f"{args.command}.manifest.json"


def load_config_file(path: str) -> Dict:
    """
    Read a flat JSON configuration, or a run manifest (its config section)

    Raises:
        ValidationError: If the file is missing or is not a JSON object
    """
    path = validate_existing_file(path, "config file")
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ValidationError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"Config file {path} must hold a JSON object")
    if 'command' in data and isinstance(data.get('config'), dict):
        return dict(data['config'])
    return data


def unique_names(paths: Sequence[Path]) -> List[str]:
    """File stems in order; a repeated stem gets a -2, -3, ... suffix"""
    names = []
    taken = set()
    for path in paths:
        name = path.stem
        suffix = 2
        while name in taken:
            name = f"{path.stem}-{suffix}"
            suffix += 1
        taken.add(name)
        names.append(name)
    return names


def _punct_tags(preset: str) -> frozenset:
    return PUNCT_PRESETS[validate_punct_preset(preset, PUNCT_PRESETS)]


# Flag destination -> TrainConfig field
_TRAIN_FLAGS = {
    'oracle': 'oracle_kind',
    'explore': 'explore',
    'p_shift': 'p_shift',
    'epochs': 'epochs',
    'seed': 'seed',
    'dropout': 'dropout',
    'word_dropout': 'word_dropout',
    'learning_rate': 'learning_rate',
    'unk_threshold': 'unk_threshold',
    'word_dim': 'word_dim',
    'pos_dim': 'pos_dim',
    'lstm_dim': 'lstm_dim',
    'hidden_dim': 'hidden_dim',
    'threads': 'threads',
}


def resolve_train_config(args, parser: argparse.ArgumentParser) -> Dict:
    """
    Merge defaults, the --config file and explicit flags

    Returns:
        Flat mapping of every TrainConfig field plus pos_column and punct_preset
    """
    resolved = {f.name: f.default for f in fields(TrainConfig)}
    resolved.update(pos_column='auto', punct_preset=DEFAULT_PUNCT_PRESET, threads=get_settings().threads)
    resolved.pop('punct_tags')

    explicit = set()
    if args.config:
        from_file = load_config_file(args.config)
        from_file.pop('punct_tags', None)
        unknown = sorted(set(from_file) - set(resolved))
        if unknown:
            parser.error(f"unknown options in {args.config}: {unknown}")
        resolved.update(from_file)
        explicit.update(from_file)

    for flag, name in _TRAIN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            resolved[name] = value
            explicit.add(name)
    for name in ('pos_column', 'punct_preset'):
        if getattr(args, name) is not None:
            resolved[name] = getattr(args, name)

    if 'explore' not in explicit:
        resolved['explore'] = resolved['oracle_kind'] == 'hybrid'
    if resolved['explore'] and resolved['oracle_kind'] != 'hybrid':
        parser.error("--explore requires --oracle hybrid")
    return resolved


def cmd_train(args, parser) -> int:
    resolved = resolve_train_config(args, parser)
    pos_column = validate_pos_column(resolved['pos_column'])
    punct_tags = _punct_tags(resolved['punct_preset'])
    options = {k: v for k, v in resolved.items() if k not in ('pos_column', 'punct_preset')}
    config = TrainConfig(**options, punct_tags=tuple(punct_tags))

    train_path = validate_existing_file(args.train, "training file")
    dev_path = validate_existing_file(args.dev, "development file")
    model_path = Path(args.model)
    model_path.parent.mkdir(parents=True, exist_ok=True)
    metrics_path = Path(args.metrics) if args.metrics else model_path.with_name(model_path.name + '.metrics.jsonl')

    train_trees = read_conllu(train_path, pos_column)
    dev_trees = read_conllu(dev_path, pos_column)
    inputs = [train_path, dev_path]

    vocab = params = adam = None
    if args.resume:
        resume_path = validate_existing_file(args.resume, "model to resume")
        params, vocab, adam = load_model(resume_path)
        inputs.append(resume_path)
        logger.info(f"Resuming from {resume_path}")

    result = train(train_trees, dev_trees, config, vocab=vocab, params=params, adam=adam,
                   metrics_path=metrics_path)
    save_model(result.params, result.vocab, model_path, adam=result.adam)
    logger.info(f"Model saved to {model_path}")

    rows = [
        [m.epoch, m.train_loss, m.uas, m.las, m.uem, '*' if m.epoch == result.best_epoch else '']
        for m in result.history
    ]
    print(tabulate(rows, headers=['epoch', 'loss', 'UAS', 'LAS', 'UEM', 'best'], tablefmt='simple',
                   floatfmt=('', '.4f', '.2f', '.2f', '.2f', '')))

    RunManifest(
        command='train',
        config=resolved,
        seed=config.seed,
        inputs=_digests(inputs),
    ).write(_manifest_path(args, model_path))
    return 0


def cmd_parse(args, parser) -> int:
    model_path = validate_existing_file(args.model, "model")
    input_path = validate_existing_file(args.input, "input file")
    pos_column = validate_pos_column(args.pos_column)
    threads = validate_positive_integer(args.threads or get_settings().threads, "threads")

    params, vocab, _ = load_model(model_path)
    items = load_conllu(input_path, pos_column)
    predictions = decode_all([item.tokens for item in items], params, vocab, threads)
    for item, arcs in zip(items, predictions):
        set_predictions(item, arcs_to_prediction(arcs))

    output = Path(args.output) if args.output else None
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        write_conllu(items, output)
        logger.info(f"Parsed {len(items)} sentences into {output}")
    else:
        write_conllu(items, sys.stdout)

    RunManifest(
        command='parse',
        config={'pos_column': pos_column, 'threads': threads},
        inputs=_digests([model_path, input_path]),
    ).write(_manifest_path(args, output))
    return 0


def cmd_eval(args, parser) -> int:
    gold_path = validate_existing_file(args.gold, "gold file")
    pred_paths = [validate_existing_file(p, "prediction file") for p in args.pred]
    pos_column = validate_pos_column(args.pos_column)
    punct_tags = _punct_tags(args.punct_preset)
    min_bucket_count = validate_positive_integer(args.min_bucket_count, "min bucket count")

    output_dir = Path(args.output_dir) if args.output_dir else pred_paths[0].parent
    output_dir.mkdir(parents=True, exist_ok=True)

    gold = read_conllu(gold_path, pos_column)
    reports, systems = {}, {}
    for name, pred_path in zip(unique_names(pred_paths), pred_paths):
        predicted = read_predictions(pred_path)
        report = score(gold, predicted, punct_tags, min_bucket_count)
        reports[name] = report
        systems[name] = predicted

        (output_dir / f"{name}.eval.json").write_text(report.to_json() + '\n', encoding='utf-8')
        report.bucket_frame().to_csv(output_dir / f"{name}.arc_length.tsv", sep='\t', index=False,
                                     float_format='%.2f')

    comparison = arc_length_table(gold, systems, punct_tags, min_bucket_count)
    comparison.to_csv(output_dir / 'arc_length_comparison.tsv', sep='\t', index=False, float_format='%.2f')

    print(summary_table(reports))

    RunManifest(
        command='eval',
        config={
            'pos_column': pos_column,
            'punct_preset': args.punct_preset,
            'min_bucket_count': min_bucket_count,
        },
        inputs=_digests([gold_path] + pred_paths),
    ).write(_manifest_path(args, output_dir / 'eval'))
    return 0


def cmd_stats(args, parser) -> int:
    paths = [validate_existing_file(p, "input file") for p in args.input]
    pos_column = validate_pos_column(args.pos_column)
    punct_tags = _punct_tags(args.punct_preset)

    named = {}
    for name, path in zip(unique_names(paths), paths):
        stats = compute_stats(read_conllu(path, pos_column), punct_tags)
        named[name] = stats
        log_metrics(logger, "STATS", file=path.name, sentences=stats.sentences, tokens=stats.tokens,
                    amb_heads=stats.amb_heads)

    frame = stats_table(named)
    output = Path(args.output) if args.output else None
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(output, sep='\t', index=False)
        punct = {name: s.punct_tokens for name, s in named.items()}
        console = frame.assign(**{'#punct': frame['split'].map(punct)})
        print(tabulate(console.values.tolist(), headers=list(console.columns), tablefmt='simple'))
    else:
        frame.to_csv(sys.stdout, sep='\t', index=False)

    RunManifest(
        command='stats',
        config={'pos_column': pos_column, 'punct_preset': args.punct_preset},
        inputs=_digests(paths),
    ).write(_manifest_path(args, output))
    return 0


def format_enumeration(trees, limit: int) -> List[str]:
    """One header line per sentence followed by its numbered sequences"""
    lines = []
    for tree in trees:
        sent_id = tree.sent_id
        if not tree.projective:
            lines.append(f"{sent_id}\t0 sequences (non-projective)")
            continue
        result = enumerate_sequences(tree, limit)
        header = f"{sent_id}\t{result.total} sequences"
        if result.truncated:
            header += f" (showing {len(result.sequences)})"
        lines.append(header)
        for number, sequence in enumerate(result.sequences, 1):
            lines.append(f"{sent_id}\t{number}\t{render(sequence)}")
    return lines


def cmd_enumerate(args, parser) -> int:
    input_path = validate_existing_file(args.input, "input file")
    pos_column = validate_pos_column(args.pos_column)
    limit = validate_positive_integer(args.limit, "limit")

    text = '\n'.join(format_enumeration(read_conllu(input_path, pos_column), limit)) + '\n'
    output = Path(args.output) if args.output else None
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text, encoding='utf-8')
    else:
        sys.stdout.write(text)

    RunManifest(
        command='enumerate',
        config={'pos_column': pos_column, 'limit': limit},
        inputs=_digests([input_path]),
    ).write(_manifest_path(args, output))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='nndep',
        description='Arc-standard dependency parser with standard and hybrid training oracles',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', required=True)

    def common(sub, punct=False, resolved_later=False):
        sub.add_argument('--pos-column', default=None if resolved_later else 'auto',
                         help='POS source: auto (XPOS, else UPOS), xpos or upos')
        if punct:
            sub.add_argument('--punct-preset', default=None if resolved_later else DEFAULT_PUNCT_PRESET,
                             help=f'punctuation tag set: {", ".join(PUNCT_PRESETS)}')
        sub.add_argument('--manifest', help='run manifest path')

    p = subparsers.add_parser('train', help='train a model')
    p.add_argument('--train', required=True, help='training CoNLL-U file')
    p.add_argument('--dev', required=True, help='development CoNLL-U file')
    p.add_argument('--model', required=True, help='output model file')
    p.add_argument('--metrics', help='per-epoch JSONL metrics (default: <model>.metrics.jsonl)')
    p.add_argument('--config', help='JSON configuration or a previous run manifest')
    p.add_argument('--resume', help='continue training a saved model')
    p.add_argument('--oracle', choices=['standard', 'hybrid'])
    p.add_argument('--explore', action=argparse.BooleanOptionalAction, default=None,
                   help='follow randomly chosen correct transitions (hybrid only)')
    p.add_argument('--p-shift', type=float, help='probability of deferring an ambiguous larc')
    p.add_argument('--epochs', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--dropout', type=float)
    p.add_argument('--word-dropout', type=float)
    p.add_argument('--learning-rate', type=float)
    p.add_argument('--unk-threshold', type=int)
    p.add_argument('--word-dim', type=int)
    p.add_argument('--pos-dim', type=int)
    p.add_argument('--lstm-dim', type=int)
    p.add_argument('--hidden-dim', type=int)
    p.add_argument('--threads', type=int)
    common(p, punct=True, resolved_later=True)
    p.set_defaults(func=cmd_train)

    p = subparsers.add_parser('parse', help='parse a CoNLL-U file')
    p.add_argument('--model', required=True)
    p.add_argument('--input', required=True)
    p.add_argument('--output', help='output CoNLL-U (default: stdout)')
    p.add_argument('--threads', type=int)
    common(p)
    p.set_defaults(func=cmd_parse)

    p = subparsers.add_parser('eval', help='score predictions against gold')
    p.add_argument('--gold', required=True)
    p.add_argument('--pred', required=True, action='append', help='prediction file (repeatable)')
    p.add_argument('--output-dir', help='report directory (default: next to the first prediction)')
    p.add_argument('--min-bucket-count', type=int, default=100)
    common(p, punct=True)
    p.set_defaults(func=cmd_eval)

    p = subparsers.add_parser('stats', help='branching and ambiguity statistics')
    p.add_argument('--input', required=True, action='append', help='CoNLL-U file (repeatable)')
    p.add_argument('--output', help='TSV output (default: stdout)')
    common(p, punct=True)
    p.set_defaults(func=cmd_stats)

    p = subparsers.add_parser('enumerate', help='list every correct transition sequence')
    p.add_argument('--input', required=True)
    p.add_argument('--limit', type=int, default=64)
    p.add_argument('--output', help='output file (default: stdout)')
    common(p)
    p.set_defaults(func=cmd_enumerate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run a command

    Returns:
        0 on success, 1 on handled errors; usage errors exit with 2
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        return args.func(args, parser)
    except HANDLED_ERRORS as e:
        log_error(logger, e, f"{args.command} failed")
        return 1
    except KeyboardInterrupt:
        logger.warning(f"{args.command} interrupted")
        return 1
    except Exception as e:
        log_error(logger, e, f"Unexpected error in {args.command}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
