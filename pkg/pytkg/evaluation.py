""" Single-step evaluation with time-aware filtered MRR and Hits@k.

The evaluation split is processed one timestamp at a time. All queries at t* are answered
against an index holding every fact before t*, then the true facts at t* are added to the index.
Every fact (s, p, o, t*) yields two object queries, (s, p, ?, t*) with answer o and
(o, p^-1, ?, t*) with answer s.

The rank of the answer is filtered in a time-aware way: other true answers of the same query at
t* are removed from the candidates. Entities without a score are scored 0, and ties are broken
by a configurable policy.
"""

import logging
import math

from collections import defaultdict, namedtuple
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import more_itertools

from pytkg.dataset import DataError, inverse_quadruple
from pytkg.index import build_index, extend_index
from pytkg.inference import Query, RuleIndex, fire_rules
from pytkg.rules import select_rules

HITS_AT = (1, 3, 10)

# Rule subsets and confidence variants of an ablation study, in reporting order
ABLATION_SELECTIONS = ('rec', 'xy', 'c', 'z', 'f', 'all-z', 'all-f', 'all-c', 'all-xy', 'all')
ABLATION_VARIANTS = ('static', 'g', 'f', 'f+g')

QueryResult = namedtuple('QueryResult', 'subject relation object timestamp rank')


def time_aware_filtered_rank(scores, gold, filtered, num_entities, policy='average'):
    """ Return the rank of the gold object among all entities.

    scores maps entities to scores, entities missing from it score 0. filtered is the set of true
    objects of the query at its timestamp; they are removed, except gold itself. A gold object
    outside the vocabulary scores 0 and is ranked among num_entities + 1 entities.

    With the 'average' policy, rank = 1 + #higher + #equal / 2, where #equal counts the other
    unfiltered entities with the same score as gold. 'best' ignores them, 'worst' counts them all.
    """
    gold_score = scores.get(gold, 0.0) if 0 <= gold < num_entities else 0.0
    higher = equal = 0
    for entity, score in scores.items():
        if entity == gold or entity in filtered:
            continue
        if score > gold_score:
            higher += 1
        elif score == gold_score:
            equal += 1

    if gold_score <= 0.0:
        known = {entity for entity in set(scores) | set(filtered) | {gold} if 0 <= entity < num_entities}
        equal += num_entities - len(known)

    if policy == 'average':
        return 1 + higher + equal / 2
    elif policy == 'best':
        return 1 + higher
    elif policy == 'worst':
        return 1 + higher + equal
    raise ValueError(f"Unknown tie policy: {policy!r}")


@dataclass
class EvalReport:
    """ Metrics of one evaluation run, with breakdowns and the configuration used. """

    mrr: float = 0.0
    hits: Dict[int, float] = field(default_factory=lambda: {k: 0.0 for k in HITS_AT})
    num_queries: int = 0
    per_relation: Dict[int, dict] = field(default_factory=dict)
    per_timestamp: Dict[int, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    ranks: List[QueryResult] = field(default_factory=list)
    label: str = ''

    @classmethod
    def from_ranks(cls, ranks, config=None, label=''):
        """ Compute all metrics from a list of QueryResults. """
        by_relation = defaultdict(list)
        by_timestamp = defaultdict(list)
        for result in ranks:
            by_relation[result.relation].append(result.rank)
            by_timestamp[result.timestamp].append(result.rank)
        all_ranks = [result.rank for result in ranks]
        mrr, hits = _metrics(all_ranks)
        return cls(mrr, hits, len(ranks),
                   per_relation={relation: _breakdown(values) for relation, values in sorted(by_relation.items())},
                   per_timestamp={timestamp: _breakdown(values)
                                  for timestamp, values in sorted(by_timestamp.items())},
                   config=dict(config or {}), ranks=list(ranks), label=label)

    def to_dict(self, include_ranks=False):
        """ Return a JSON-compatible dict. """
        record = {
            'label': self.label,
            'mrr': self.mrr,
            'hits': {str(k): value for k, value in self.hits.items()},
            'num_queries': self.num_queries,
            'per_relation': {str(key): value for key, value in self.per_relation.items()},
            'per_timestamp': {str(key): value for key, value in self.per_timestamp.items()},
            'config': self.config,
        }
        if include_ranks:
            record['ranks'] = [list(result) for result in self.ranks]
        return record

    def format_table(self):
        """ Return a human-readable summary. """
        lines = [f"{'':12} {'MRR':>8} " + ' '.join(f"{'Hits@' + str(k):>8}" for k in HITS_AT) + f" {'queries':>8}"]
        lines.append(f"{self.label or 'all':12} {self.mrr:8.4f} " +
                     ' '.join(f"{self.hits[k]:8.4f}" for k in HITS_AT) + f" {self.num_queries:8d}")
        return '\n'.join(lines)


def _metrics(ranks):
    if not ranks:
        return 0.0, {k: 0.0 for k in HITS_AT}
    mrr = sum(1.0 / rank for rank in ranks) / len(ranks)
    hits = {k: sum(1 for rank in ranks if rank <= k) / len(ranks) for k in HITS_AT}
    return mrr, hits


def _breakdown(ranks):
    mrr, hits = _metrics(ranks)
    return {'mrr': mrr, 'hits': {str(k): value for k, value in hits.items()}, 'num_queries': len(ranks)}


def format_ablation(reports):
    """ Return a human-readable table of several reports, one row each. """
    lines = [reports[0].format_table().splitlines()[0]] if reports else []
    lines += [report.format_table().splitlines()[1] for report in reports]
    return '\n'.join(lines)


def check_sorted(quads):
    """ Raise DataError unless the quadruples are sorted by timestamp. """
    for previous, quad in zip(quads, quads[1:]):
        if quad.timestamp < previous.timestamp:
            raise DataError(f"Evaluation split is not sorted by timestamp: {quad} follows {previous}")


def answer_timestamp(index, rules, queries, config, executor=None):
    """ Return {(subject, relation): CandidateScores} for the queries of one timestamp. """
    keys = sorted({(query.subject, query.relation) for query in queries})
    timestamp = queries[0].timestamp if queries else None

    def answer(key):
        return fire_rules(index, rules, Query(key[0], key[1], timestamp), config.window,
                          config.conf_variant, config.top_h)

    if executor is not None:
        return dict(zip(keys, executor.map(answer, keys)))
    return {key: answer(key) for key in keys}


def timestamp_groups(eval_quads, num_relations):
    """ Yield (timestamp, facts) for a sorted split.

    facts holds the quadruples at the timestamp followed by their inverses.
    """
    for group in more_itertools.split_when(eval_quads, lambda a, b: a.timestamp != b.timestamp):
        yield group[0].timestamp, group + [inverse_quadruple(quad, num_relations) for quad in group]


def iterate_single_step(index, rules, eval_quads, config, num_relations):
    """ Yield (timestamp, [(query, gold, truth)], {(subject, relation): CandidateScores}) per timestamp.

    The index is extended with the true facts of each timestamp after its queries are answered,
    so it is mutated by this generator.
    """
    eval_quads = list(eval_quads)
    check_sorted(eval_quads)
    if not isinstance(rules, RuleIndex):
        rules = RuleIndex(rules)

    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for timestamp, facts in timestamp_groups(eval_quads, num_relations):
            truth = defaultdict(set)
            for quad in facts:
                truth[(quad.subject, quad.relation)].add(quad.object)

            queries = [(Query(quad.subject, quad.relation, timestamp), quad.object,
                        truth[(quad.subject, quad.relation)]) for quad in facts]
            candidates = answer_timestamp(index, rules, [query for query, _, _ in queries], config, executor)
            yield timestamp, queries, candidates

            extend_index(index, facts)
            logging.debug(f"Evaluated {len(queries)} queries at timestamp {timestamp}")
    finally:
        if executor is not None:
            executor.shutdown()


def run_single_step(index, rules, eval_quads, config, num_relations, num_entities, label=''):
    """ Evaluate rules on a split with single-step prediction and return an EvalReport.

    index must hold the facts (augmented with inverses) preceding the split, and is extended
    with the split's facts as the evaluation proceeds. Without any rules no object is predicted,
    so every query is ranked last with rank inf and all metrics are 0.
    """
    eval_quads = list(eval_quads)
    rules = rules if isinstance(rules, RuleIndex) else RuleIndex(rules)
    if not len(rules):
        check_sorted(eval_quads)
        logging.info("No rules to evaluate, ranking every query last")
        results = [QueryResult(quad.subject, quad.relation, quad.object, timestamp, math.inf)
                   for timestamp, facts in timestamp_groups(eval_quads, num_relations) for quad in facts]
        return EvalReport.from_ranks(results, config.as_dict(), label)

    results = []
    for timestamp, queries, candidates in iterate_single_step(index, rules, eval_quads, config, num_relations):
        for query, gold, truth in queries:
            scores = candidates[(query.subject, query.relation)].scores(config.top_h, config.decay)
            rank = time_aware_filtered_rank(scores, gold, truth - {gold}, num_entities, config.tie_policy)
            results.append(QueryResult(query.subject, query.relation, gold, timestamp, rank))

    report = EvalReport.from_ranks(results, config.as_dict(), label)
    logging.info(f"MRR {report.mrr:.4f} over {report.num_queries} queries")
    return report


def run_ablation(context_quads, rules, eval_quads, config, num_relations, num_entities):
    """ Evaluate every rule subset and confidence variant of an ablation study.

    context_quads are the (augmented) facts preceding the split; a fresh index is built from them
    for each run. Returns a list of EvalReports labelled with the subset or variant.
    """
    reports = []
    for selection in ABLATION_SELECTIONS:
        selected = select_rules(rules, selection)
        logging.info(f"Ablation: {selection} ({len(selected)} rules)")
        reports.append(run_single_step(build_index(context_quads), selected, eval_quads, config,
                                       num_relations, num_entities, label=selection))
    for variant in ABLATION_VARIANTS:
        logging.info(f"Ablation: confidence variant {variant}")
        variant_config = config.merged({'conf_variant': variant})
        reports.append(run_single_step(build_index(context_quads), rules, eval_quads, variant_config,
                                       num_relations, num_entities, label=f"conf:{variant}"))
    return reports


def write_ranks(report, stream, vocabulary=None):
    """ Write the per-query ranks of a report as tab-separated text. Unranked queries show inf. """
    stream.write('subject\trelation\tobject\ttimestamp\trank\n')
    for result in report.ranks:
        if vocabulary is not None:
            names = (vocabulary.entity_name(result.subject), vocabulary.relation_name(result.relation),
                     vocabulary.entity_name(result.object))
        else:
            names = (result.subject, result.relation, result.object)
        stream.write('\t'.join(str(value) for value in (*names, result.timestamp, result.rank)) + '\n')
