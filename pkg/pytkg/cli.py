""" Command-line interface: learn rules, evaluate them, predict, explain predictions and run ablations.

    pytkg learn   --train train.txt --out rules.jsonl
    pytkg eval    --train train.txt --valid valid.txt --test test.txt --rules rules.jsonl
    pytkg predict --train train.txt --valid valid.txt --test test.txt --rules rules.jsonl --out predictions.jsonl
    pytkg explain --train train.txt --rules rules.jsonl --query Hollande Consult 351
    pytkg ablate  --train train.txt --valid valid.txt --test test.txt --rules rules.jsonl

Exit codes: 0 on success, 1 for usage errors and 2 for unreadable or inconsistent data.
"""

import argparse
import json
import logging
import os
import sys

import sqlalchemy

from pytkg.config import TIE_POLICIES, Config, load_config
from pytkg.confidence import CONF_VARIANTS
from pytkg.dataset import DataError, augment_with_inverses, load_dataset, write_mappings
from pytkg.evaluation import format_ablation, iterate_single_step, run_ablation, run_single_step, write_ranks
from pytkg.index import build_index
from pytkg.inference import (PREDICTIONS_FORMAT, PREDICTIONS_VERSION, Query, RuleIndex, explain, fire_rules,
                             prediction_record, predictions_header, rank)
from pytkg.learning import learn_rules
from pytkg.rules import parse_rules, select_rules, serialize_rules
from pytkg.sql import record_report

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    """ Raised when the command line is valid syntax but cannot be run, e.g. a missing path. """


class ArgumentParser(argparse.ArgumentParser):
    """ An ArgumentParser which exits with EXIT_USAGE on errors. """

    def error(self, message):
        """ Print a usage message and exit. """
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common_arguments(parser):
    # Defaults are None so that unset flags do not override the configuration file
    parser.add_argument('--config', help="Configuration file of 'key = value' lines, overridden by flags")
    parser.add_argument('--train', help="Training split, one tab-separated fact per line")
    parser.add_argument('--valid', help="Validation split")
    parser.add_argument('--test', help="Test split")
    parser.add_argument('--rules', help="Rule file to read")
    parser.add_argument('--out', help="Output file")
    parser.add_argument('--names', action='store_true', default=None,
                        help="Splits contain entity and relation names instead of integer ids")
    parser.add_argument('--raw-timestamps', action='store_true', default=None,
                        help="Use the integer timestamps of the splits instead of dense ticks 0, 1, 2, ...")
    parser.add_argument('--window', type=int, help="Window W for counting recent body groundings (default 50)")
    parser.add_argument('--psmooth', type=float, help="Smoothing constant added to confidence denominators (default 10)")
    parser.add_argument('--top-h', type=int, help="Number of rule confidences aggregated per candidate (default 5)")
    parser.add_argument('--decay', type=float, help="Decay of the i-th highest confidence (default 0.9)")
    parser.add_argument('--top-constants', type=int, help="Number of frequent entities used by c-rules (default 100)")
    parser.add_argument('--min-support', type=int, help="Minimum support of candidate rules (default 5)")
    parser.add_argument('--floor', type=float, help="Minimum peak confidence of kept rules (default 0.001)")
    parser.add_argument('--tie-policy', choices=TIE_POLICIES, help="Rank of a gold object tied with others")
    parser.add_argument('--threads', type=int, help="Number of worker processes or threads (default 1)")
    parser.add_argument('--seed', type=int, help="Seed of the extra random starts of the confidence fit")
    parser.add_argument('--extra-starts', type=int, help="Number of random starts added to the fixed ones")
    parser.add_argument('--split', choices=('valid', 'test'), help="Split to evaluate or predict (default test)")
    parser.add_argument('--train-only', action='store_true', default=None,
                        help="When evaluating the test split, do not add validation facts to the index")
    parser.add_argument('--rule-types', help="Rules to use: all, none, all-<type> or a list of rec, xy, c, z, f")
    parser.add_argument('--conf-variant', choices=CONF_VARIANTS, help="Confidence function of xy- and c-rules")
    parser.add_argument('--top-k', type=int, help="Number of candidates to predict or explain (default 10)")
    parser.add_argument('--verbose', action='store_true', help="Show progress information while running")
    parser.add_argument('--debug', action='store_true', help="Show debugging information while running")


def build_parser():
    """ Return the ArgumentParser of all subcommands. """
    parser = ArgumentParser(prog='pytkg', description="Learn temporal rules from a temporal knowledge "
                                                      "graph and use them to forecast future facts.")
    subparsers = parser.add_subparsers(dest='command', metavar='command', parser_class=ArgumentParser)
    subparsers.required = True

    learn = subparsers.add_parser('learn', help="Learn rules from the training split")
    learn.add_argument('--diagnostics', metavar='DIR',
                       help="Write the bucketed targets and fitted curves of every rule to CSV files in DIR")
    learn.add_argument('--mappings', metavar='DIR',
                       help="With --names, write entity2id.txt and relation2id.txt to DIR")

    evaluate = subparsers.add_parser('eval', help="Evaluate rules with time-aware filtered MRR and Hits@k")
    evaluate.add_argument('--ranks', metavar='FILE', help="Write the rank of every query to FILE")
    evaluate.add_argument('--database', help="SQLAlchemy URL of a database to record the report in")

    subparsers.add_parser('predict', help="Predict the top-k objects of every query of a split")

    explain_parser = subparsers.add_parser('explain', help="Explain the top-k predictions of one query")
    explain_parser.add_argument('--query', nargs=3, required=True, metavar=('SUBJECT', 'RELATION', 'TIMESTAMP'),
                                help="Query (SUBJECT, RELATION, ?, TIMESTAMP), by name or id. "
                                     "TIMESTAMP is a tick unless --raw-timestamps is given")

    ablate = subparsers.add_parser('ablate', help="Evaluate rule type subsets and confidence variants")
    ablate.add_argument('--database', help="SQLAlchemy URL of a database to record the reports in")

    for subparser in (learn, evaluate, subparsers.choices['predict'], explain_parser, ablate):
        _add_common_arguments(subparser)
    return parser


def effective_config(args):
    """ Return the Config of parsed arguments: defaults, then the config file, then flags. """
    config = Config()
    if args.config:
        config = load_config(args.config, config)
    overrides = {name: getattr(args, name) for name in Config.field_names() if hasattr(args, name)}
    return config.merged(overrides).validate()


def _require(value, flag):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def load_data(config):
    """ Load the dataset named by a Config. """
    _require(config.train, '--train')
    return load_dataset(config.train, config.valid, config.test,
                        mode='names' if config.names else 'ids',
                        dense_timestamps=not config.raw_timestamps)


def load_rules(config, vocabulary):
    """ Read the rule file named by a Config, checking it was learned over the same vocabulary. """
    with open(_require(config.rules, '--rules'), encoding='utf-8') as f:
        rules = parse_rules(f)
    for name, expected in (('num_entities', vocabulary.num_entities), ('num_relations', vocabulary.num_relations)):
        found = rules.metadata.get(name)
        if found is not None and found != expected:
            raise DataError(f"Vocabulary mismatch: rule file was learned with {name} = {found}, "
                            f"dataset has {expected}")
    digest = rules.metadata.get('vocabulary')
    if digest is not None and digest != vocabulary.digest():
        raise DataError("Vocabulary mismatch: rule file was learned over different entity or relation names")
    return rules


def evaluation_context(config, dataset):
    """ Return (facts preceding the evaluated split, evaluated split) according to a Config. """
    if config.split == 'valid':
        context, evaluated = dataset.train, dataset.valid
    else:
        context = dataset.train if config.train_only else dataset.train + dataset.valid
        evaluated = dataset.test
    if not evaluated:
        raise DataError(f"The {config.split} split is empty")
    return augment_with_inverses(context, dataset.vocabulary.num_relations), evaluated


def _write_json(path, value):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(value, f, indent=2, sort_keys=True)
        f.write('\n')


def cmd_learn(config, args):
    """ Learn rules from the training split and write them to a rule file. """
    out = _require(config.out or config.rules, '--out')
    dataset = load_data(config)
    if not dataset.train:
        raise DataError(f"Training split {config.train} is empty")
    vocabulary = dataset.vocabulary

    index = build_index(augment_with_inverses(dataset.train, vocabulary.num_relations))
    if args.diagnostics:
        os.makedirs(args.diagnostics, exist_ok=True)
    rules = learn_rules(index, config, args.diagnostics)

    # The thread count does not affect the result, so it is left out to keep rule files identical
    echo = {key: value for key, value in config.as_dict().items() if key != 'threads'}
    metadata = {'config': echo, 'num_entities': vocabulary.num_entities,
                'num_relations': vocabulary.num_relations, 'vocabulary': vocabulary.digest()}
    with open(out, 'w', encoding='utf-8') as f:
        serialize_rules(rules, f, metadata, vocabulary if config.names else None)
    if config.names and args.mappings:
        os.makedirs(args.mappings, exist_ok=True)
        write_mappings(vocabulary, args.mappings)

    for rule_type, count in rules.counts().items():
        print(f"{rule_type}-rules: {count}")
    print(f"Wrote {len(rules)} rules to {out}")


def cmd_eval(config, args):
    """ Evaluate rules on the validation or test split and report MRR and Hits@k. """
    dataset = load_data(config)
    rules = load_rules(config, dataset.vocabulary)
    context, evaluated = evaluation_context(config, dataset)

    report = run_single_step(build_index(context), select_rules(rules, config.rule_types), evaluated, config,
                             dataset.vocabulary.num_relations, dataset.vocabulary.num_entities,
                             label=config.split)
    print(report.format_table())

    if config.out:
        _write_json(config.out, report.to_dict())
    if args.ranks:
        with open(args.ranks, 'w', encoding='utf-8') as f:
            write_ranks(report, f, dataset.vocabulary if config.names else None)
    if args.database:
        record_report(sqlalchemy.create_engine(args.database), report)
    return report


def cmd_predict(config, args):
    """ Answer every query of a split with single-step prediction, writing the top-k candidates. """
    dataset = load_data(config)
    vocabulary = dataset.vocabulary
    rules = RuleIndex(select_rules(load_rules(config, vocabulary), config.rule_types))
    context, evaluated = evaluation_context(config, dataset)

    stream = open(config.out, 'w', encoding='utf-8') if config.out else sys.stdout
    try:
        stream.write(predictions_header({'split': config.split, 'top_k': config.top_k}) + '\n')
        for timestamp, queries, candidates in iterate_single_step(build_index(context), rules, evaluated,
                                                                  config, vocabulary.num_relations):
            for subject, relation in sorted(candidates):
                ranking = rank(candidates[(subject, relation)], config.top_h, config.decay)
                stream.write(prediction_record(Query(subject, relation, timestamp), ranking, config.top_k,
                                               vocabulary if config.names else None) + '\n')
    finally:
        if stream is not sys.stdout:
            stream.close()
    logging.info(f"Wrote {PREDICTIONS_FORMAT} version {PREDICTIONS_VERSION} predictions")


def parse_query(vocabulary, subject, relation, timestamp):
    """ Return the Query of names or ids given on the command line. Raises DataError for unknown names. """
    try:
        timestamp = int(timestamp)
    except ValueError:
        raise DataError(f"Timestamp must be an integer, got {timestamp!r}")
    return Query(vocabulary.entity_id(subject), vocabulary.relation_id(relation), timestamp)


def cmd_explain(config, args):
    """ Print the rules behind the top-k candidates of one query. """
    dataset = load_data(config)
    vocabulary = dataset.vocabulary
    rules = RuleIndex(select_rules(load_rules(config, vocabulary), config.rule_types))
    query = parse_query(vocabulary, *args.query)

    # Retrieval is strictly before the query timestamp, so later facts in the index are never used
    index = build_index(augment_with_inverses(dataset.train + dataset.valid + dataset.test,
                                              vocabulary.num_relations))
    candidates = fire_rules(index, rules, query, config.window, config.conf_variant, config.top_h)
    explanations = [explain(query, candidate, candidates, config.top_h, config.decay, vocabulary)
                    for candidate, score in rank(candidates, config.top_h, config.decay)[:config.top_k]]

    if not explanations:
        print(f"No rule predicts an object for {vocabulary.relation_name(query.relation)}"
              f"({vocabulary.entity_name(query.subject)},?,{query.timestamp})")
    for explanation in explanations:
        print(explanation.format_text())

    if config.out:
        with open(config.out, 'w', encoding='utf-8') as f:
            f.write(json.dumps({'format': 'pytkg-explanations', 'version': 1}) + '\n')
            for explanation in explanations:
                f.write(json.dumps(explanation.to_record()) + '\n')
    return explanations


def cmd_ablate(config, args):
    """ Evaluate every rule type subset and confidence variant, and print a table of the results. """
    dataset = load_data(config)
    rules = load_rules(config, dataset.vocabulary)
    context, evaluated = evaluation_context(config, dataset)

    reports = run_ablation(context, rules, evaluated, config,
                           dataset.vocabulary.num_relations, dataset.vocabulary.num_entities)
    print(format_ablation(reports))

    if config.out:
        _write_json(config.out, [report.to_dict() for report in reports])
    if args.database:
        engine = sqlalchemy.create_engine(args.database)
        for report in reports:
            record_report(engine, report)
    return reports


COMMANDS = {
    'learn': cmd_learn,
    'eval': cmd_eval,
    'predict': cmd_predict,
    'explain': cmd_explain,
    'ablate': cmd_ablate,
}


def main(cmdline_args=None):
    """ Run pytkg as a command-line application. Called by bin/pytkg.py. """
    parser = build_parser()
    args = parser.parse_args(cmdline_args)

    logging.basicConfig(format='%(asctime)s %(levelname)s %(message)s')
    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.verbose:
        logging.getLogger().setLevel(logging.INFO)

    try:
        config = effective_config(args)
    except (ValueError, OSError) as exc:
        parser.error(f"invalid configuration: {exc}")

    try:
        COMMANDS[args.command](config, args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, OSError) as exc:
        logging.error(f"{args.command} failed: {exc}")
        print(f"pytkg: error: {exc}", file=sys.stderr)
        sys.exit(EXIT_DATA)
