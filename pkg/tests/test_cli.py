import json
import re

import pytest

from src import __version__
from src.cli import file_digest, main
from src.core.treebank import GoldTree, read_conllu
from tests.conftest import chain_tree, phrase_tree, flat_tree, write_conllu_file

MICRO_FLAGS = [
    '--word-dim', '4', '--pos-dim', '2', '--lstm-dim', '4', '--hidden-dim', '8',
    '--epochs', '2', '--threads', '1', '--dropout', '0.2',
]


@pytest.fixture
def treebank(tmp_path):
    trees = [phrase_tree(), flat_tree(2, 1), chain_tree(3), flat_tree(1, 2)]
    return write_conllu_file(tmp_path / 'train.conllu', trees)


def train_args(tmp_path, treebank, model_name='model.bin', *extra):
    return [
        'train', '--train', treebank, '--dev', treebank,
        '--model', str(tmp_path / model_name), '--seed', '1', *MICRO_FLAGS, *extra,
    ]


class TestTrain:
    def test_train_writes_model_metrics_and_manifest(self, tmp_path, treebank, capsys):
        assert main(train_args(tmp_path, treebank, 'model.bin', '--oracle', 'hybrid', '--explore')) == 0

        rows = capsys.readouterr().out.splitlines()[2:]
        assert len(rows) == 2
        for row in rows:
            fields = row.split()
            assert re.fullmatch(r'\d+\.\d{4}', fields[1])
            assert all(re.fullmatch(r'\d+\.\d{2}', value) for value in fields[2:5])

        metrics = (tmp_path / 'model.bin.metrics.jsonl').read_text().splitlines()
        assert len(metrics) == 2

        manifest = json.loads((tmp_path / 'model.bin.manifest.json').read_text())
        assert manifest['command'] == 'train'
        assert manifest['seed'] == 1
        assert manifest['version'] == __version__
        assert manifest['config']['oracle_kind'] == 'hybrid'
        assert manifest['config']['explore'] is True
        assert manifest['config']['epochs'] == 2
        assert manifest['config']['punct_preset'] == 'ud-zh'
        assert manifest['inputs'][treebank] == file_digest(treebank)

    def test_training_is_reproducible(self, tmp_path, treebank):
        assert main(train_args(tmp_path, treebank, 'a.bin')) == 0
        assert main(train_args(tmp_path, treebank, 'b.bin')) == 0
        assert (tmp_path / 'a.bin').read_bytes() == (tmp_path / 'b.bin').read_bytes()

    def test_rerun_from_manifest(self, tmp_path, treebank):
        assert main(train_args(tmp_path, treebank, 'a.bin', '--oracle', 'standard')) == 0
        manifest = str(tmp_path / 'a.bin.manifest.json')
        rerun = ['train', '--train', treebank, '--dev', treebank,
                 '--model', str(tmp_path / 'c.bin'), '--config', manifest]
        assert main(rerun) == 0
        assert (tmp_path / 'a.bin').read_bytes() == (tmp_path / 'c.bin').read_bytes()
        assert json.loads((tmp_path / 'c.bin.manifest.json').read_text())['config']['explore'] is False

    def test_flags_override_config(self, tmp_path, treebank):
        config = tmp_path / 'config.json'
        config.write_text(json.dumps({'epochs': 5, 'oracle_kind': 'standard'}))
        args = train_args(tmp_path, treebank, 'm.bin', '--config', str(config))
        assert main(args) == 0
        manifest = json.loads((tmp_path / 'm.bin.manifest.json').read_text())
        assert manifest['config']['epochs'] == 2
        assert manifest['config']['oracle_kind'] == 'standard'

    def test_explore_with_standard_is_usage_error(self, tmp_path, treebank):
        with pytest.raises(SystemExit) as exit_info:
            main(train_args(tmp_path, treebank, 'm.bin', '--oracle', 'standard', '--explore'))
        assert exit_info.value.code == 2

    def test_missing_training_file(self, tmp_path, treebank):
        args = ['train', '--train', str(tmp_path / 'nope.conllu'), '--dev', treebank,
                '--model', str(tmp_path / 'm.bin'), *MICRO_FLAGS]
        assert main(args) == 1

    def test_non_projective_only_training_set(self, tmp_path, treebank):
        bad = write_conllu_file(tmp_path / 'np.conllu', [GoldTree.from_heads([3, 4, 0, 3])])
        args = ['train', '--train', bad, '--dev', treebank, '--model', str(tmp_path / 'm.bin'), *MICRO_FLAGS]
        assert main(args) == 1

    def test_invalid_value_is_reported(self, tmp_path, treebank):
        assert main(train_args(tmp_path, treebank, 'm.bin', '--p-shift', '1.5')) == 1


class TestParseAndEval:
    def test_parse_then_eval(self, tmp_path, treebank, capsys):
        assert main(train_args(tmp_path, treebank)) == 0
        output = tmp_path / 'parsed.conllu'
        assert main(['parse', '--model', str(tmp_path / 'model.bin'), '--input', treebank,
                     '--output', str(output), '--threads', '2']) == 0

        parsed = read_conllu(output)
        gold = read_conllu(treebank)
        assert [t.forms for t in parsed] == [t.forms for t in gold]
        assert [t.pos for t in parsed] == [t.pos for t in gold]
        assert (tmp_path / 'parsed.conllu.manifest.json').exists()

        reports = tmp_path / 'reports'
        assert main(['eval', '--gold', treebank, '--pred', str(output), '--pred', treebank,
                     '--output-dir', str(reports), '--min-bucket-count', '1']) == 0
        self_report = json.loads((reports / 'train.eval.json').read_text())
        assert self_report['uas'] == self_report['las'] == self_report['uem'] == 100.0
        parsed_report = json.loads((reports / 'parsed.eval.json').read_text())
        assert 0.0 <= parsed_report['las'] <= parsed_report['uas'] <= 100.0

        buckets = (reports / 'parsed.arc_length.tsv').read_text().splitlines()
        assert buckets[0].split('\t') == ['bucket', 'gold', 'recalled', 'recall']
        gold_total = sum(int(line.split('\t')[1]) for line in buckets[1:])
        assert gold_total == parsed_report['evaluated_tokens']

        comparison = (reports / 'arc_length_comparison.tsv').read_text().splitlines()
        assert comparison[0].split('\t') == ['bucket', 'gold', 'parsed_recall', 'train_recall']
        assert (reports / 'eval.manifest.json').exists()

    def test_eval_one_head_error(self, tmp_path):
        gold = write_conllu_file(tmp_path / 'gold.conllu', [phrase_tree()])
        wrong = GoldTree.from_heads([2, 0, 1], labels=['case', 'root', 'case'],
                                    forms=['在', '文', '中'], pos=['P', 'NN', 'LC'], sent_id='zwz')
        pred = write_conllu_file(tmp_path / 'pred.conllu', [wrong])
        assert main(['eval', '--gold', gold, '--pred', pred]) == 0
        report = json.loads((tmp_path / 'pred.eval.json').read_text())
        assert report['uas'] == pytest.approx(66.6667, abs=1e-3)

    def test_eval_scores_predictions_that_are_not_trees(self, tmp_path):
        gold = write_conllu_file(tmp_path / 'gold.conllu', [phrase_tree()])
        pred = tmp_path / 'pred.conllu'
        pred.write_text(
            '# sent_id = zwz\n'
            '1\t在\t_\t_\tP\t_\t2\tcase\t_\t_\n'
            '2\t文\t_\t_\tNN\t_\t0\troot\t_\t_\n'
            '3\t中\t_\t_\tLC\t_\t0\troot\t_\t_\n\n',
            encoding='utf-8',
        )
        assert main(['eval', '--gold', gold, '--pred', str(pred)]) == 0
        report = json.loads((tmp_path / 'pred.eval.json').read_text())
        assert report['uas'] == pytest.approx(66.6667, abs=1e-3)
        assert report['uem'] == 0.0

    def test_eval_keeps_systems_with_the_same_file_name(self, tmp_path):
        gold = write_conllu_file(tmp_path / 'gold.conllu', [phrase_tree()])
        (tmp_path / 'a').mkdir()
        (tmp_path / 'b').mkdir()
        first = write_conllu_file(tmp_path / 'a' / 'pred.conllu', [phrase_tree()])
        wrong = GoldTree.from_heads([3, 0, 2], labels=['case', 'root', 'case'],
                                    forms=['在', '文', '中'], pos=['P', 'NN', 'LC'], sent_id='zwz')
        second = write_conllu_file(tmp_path / 'b' / 'pred.conllu', [wrong])
        reports = tmp_path / 'reports'
        assert main(['eval', '--gold', gold, '--pred', first, '--pred', second,
                     '--output-dir', str(reports), '--min-bucket-count', '1']) == 0

        assert json.loads((reports / 'pred.eval.json').read_text())['uas'] == 100.0
        assert json.loads((reports / 'pred-2.eval.json').read_text())['uas'] < 100.0
        assert (reports / 'pred-2.arc_length.tsv').exists()
        header = (reports / 'arc_length_comparison.tsv').read_text().splitlines()[0]
        assert header.split('\t') == ['bucket', 'gold', 'pred_recall', 'pred-2_recall']

    def test_eval_sentence_count_mismatch(self, tmp_path):
        gold = write_conllu_file(tmp_path / 'gold.conllu', [phrase_tree(), chain_tree(2)])
        pred = write_conllu_file(tmp_path / 'pred.conllu', [phrase_tree()])
        assert main(['eval', '--gold', gold, '--pred', pred]) == 1

    def test_parse_empty_input(self, tmp_path, treebank):
        assert main(train_args(tmp_path, treebank)) == 0
        empty = tmp_path / 'empty.conllu'
        empty.write_text('')
        output = tmp_path / 'out.conllu'
        assert main(['parse', '--model', str(tmp_path / 'model.bin'), '--input', str(empty),
                     '--output', str(output)]) == 0
        assert output.read_text() == ''

    def test_parse_rejects_corrupt_model(self, tmp_path, treebank):
        model = tmp_path / 'broken.bin'
        model.write_bytes(b'not a model at all, just some bytes that are long enough')
        assert main(['parse', '--model', str(model), '--input', treebank]) == 1


class TestStatsAndEnumerate:
    def test_stats_phrase_row(self, tmp_path):
        fixture = write_conllu_file(tmp_path / 'phrase.conllu', [phrase_tree()])
        output = tmp_path / 'stats.tsv'
        assert main(['stats', '--input', fixture, '--output', str(output)]) == 0
        header, row = output.read_text().splitlines()
        assert header.split('\t') == ['split', '#sentences', '#tokens', '#left dep.', '#right dep.',
                                      '#amb. sentences', '#amb. heads', '#amb. tokens']
        assert row.split('\t') == ['phrase', '1', '3', '1', '1', '1', '1', '3']

    def test_stats_one_row_per_file(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        chains = write_conllu_file(tmp_path / 'chains.conllu', [chain_tree(n) for n in range(1, 5)])
        phrase_file = write_conllu_file(tmp_path / 'phrase.conllu', [phrase_tree()])
        assert main(['stats', '--input', chains, '--input', phrase_file]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        assert lines[1].split('\t')[5:] == ['0', '0', '0']
        assert (tmp_path / 'runs' / 'stats.manifest.json').exists()

    def test_stats_keeps_files_with_the_same_name(self, tmp_path):
        (tmp_path / 'a').mkdir()
        (tmp_path / 'b').mkdir()
        first = write_conllu_file(tmp_path / 'a' / 'train.conllu', [phrase_tree()])
        second = write_conllu_file(tmp_path / 'b' / 'train.conllu', [chain_tree(2), chain_tree(3)])
        output = tmp_path / 'stats.tsv'
        assert main(['stats', '--input', first, '--input', second, '--output', str(output)]) == 0
        rows = [line.split('\t') for line in output.read_text().splitlines()[1:]]
        assert [row[:3] for row in rows] == [['train', '1', '3'], ['train-2', '2', '5']]

    def test_enumerate_phrase(self, tmp_path):
        fixture = write_conllu_file(tmp_path / 'phrase.conllu', [phrase_tree()])
        output = tmp_path / 'seqs.txt'
        assert main(['enumerate', '--input', fixture, '--output', str(output)]) == 0
        lines = output.read_text().splitlines()
        assert lines == [
            'zwz\t2 sequences',
            'zwz\t1\tshift shift shift shift rarc:case larc:case rarc:root',
            'zwz\t2\tshift shift shift larc:case shift rarc:case rarc:root',
        ]

    def test_enumerate_flat_and_non_projective(self, tmp_path):
        trees = [flat_tree(2, 2), GoldTree.from_heads([3, 4, 0, 3], sent_id='np')]
        fixture = write_conllu_file(tmp_path / 'mixed.conllu', trees)
        output = tmp_path / 'seqs.txt'
        assert main(['enumerate', '--input', fixture, '--output', str(output), '--limit', '3']) == 0
        lines = output.read_text().splitlines()
        assert lines[0] == 'flat-2-2\t6 sequences (showing 3)'
        assert len([line for line in lines if line.startswith('flat-2-2\t')]) == 4
        assert lines[-1] == 'np\t0 sequences (non-projective)'
        manifest = json.loads((tmp_path / 'seqs.txt.manifest.json').read_text())
        assert manifest['config'] == {'limit': 3, 'pos_column': 'auto'}


def test_unknown_command():
    with pytest.raises(SystemExit) as exit_info:
        main(['reduce'])
    assert exit_info.value.code == 2


def test_unexpected_error_is_logged_and_reported(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise KeyError('split')

    monkeypatch.setattr('src.cli.compute_stats', broken)
    fixture = write_conllu_file(tmp_path / 'phrase.conllu', [phrase_tree()])
    assert main(['stats', '--input', fixture, '--output', str(tmp_path / 'stats.tsv')]) == 1
