""" Answer object queries (s, p, ?, t*) by firing rules and aggregating their confidences.

Every rule that fires for a query contributes one hit (rule, confidence) to a candidate
object. The hits of a candidate are sorted by confidence and the top H are combined with a
decayed noisy-or:

    score = 1 - prod_i (1 - s_i * D ** i),    i = 0, 1, ..., min(n, H) - 1

so the highest confidence is not damped and D = 0 reduces to the maximum.
"""

import json

from collections import defaultdict, namedtuple
from dataclasses import dataclass, field
from typing import List

from pytkg.index import deltas_c, deltas_xy
from pytkg.rules import RuleType

PREDICTIONS_FORMAT = 'pytkg-predictions'
PREDICTIONS_VERSION = 1

Query = namedtuple('Query', 'subject relation timestamp')

# min_delta, frequency, recency and frequency_score are None for static confidences
Hit = namedtuple('Hit', 'rule confidence min_delta frequency recency frequency_score')


class RuleIndex:
    """ Rules grouped by the queries they can answer. """

    def __init__(self, rules):
        self.rules = list(rules)
        self.by_head = defaultdict(list)
        self.f_rules = defaultdict(list)
        for rule in self.rules:
            if rule.rule_type is RuleType.f:
                self.f_rules[(rule.head_relation, rule.subject_constant)].append(rule)
            else:
                self.by_head[rule.head_relation].append(rule)

    def matching(self, query):
        """ Return the rules whose head relation (and subject, for f-rules) match a query. """
        return self.by_head.get(query.relation, []) + self.f_rules.get((query.relation, query.subject), [])

    def __len__(self):
        """ Number of items. """
        return len(self.rules)


class CandidateScores:
    """ Hits per candidate object of one query, sorted by confidence descending. """

    def __init__(self, query=None):
        self.query = query
        self.hits = defaultdict(list)

    def add(self, candidate, hit):
        """ Record a hit for a candidate. Call finalize() after the last one. """
        self.hits[candidate].append(hit)

    def finalize(self, top_h=None):
        """ Sort the hits of every candidate, keeping at most top_h of them. Returns self. """
        for candidate, hits in self.hits.items():
            hits.sort(key=lambda hit: (-hit.confidence, hit.rule.key))
            if top_h is not None:
                del hits[top_h:]
        return self

    def scores(self, top_h, decay):
        """ Return a dict from candidate to aggregated score. """
        return {candidate: aggregate([hit.confidence for hit in hits], top_h, decay)
                for candidate, hits in self.hits.items()}

    def __contains__(self, candidate):
        """ Whether a candidate has any hits. """
        return candidate in self.hits

    def __len__(self):
        """ Number of items. """
        return len(self.hits)


def _learned_confidence(rule, delta_set, variant):
    if variant == 'static':
        return rule.static_conf, None, None
    f, g = rule.model.components(delta_set)
    return rule.model.confidence(delta_set, variant), f, g


def fire_rules(index, rules, query, window, variant='f+g', top_h=None):
    """ Return the CandidateScores of a query.

    rules is a RuleIndex or a list of rules. The index must only hold facts the query may
    see; Δ sets are retrieved strictly before query.timestamp in any case. Learned rules
    retrieve Δ sets with the window their model was fitted with; window only applies to
    rules without a model. Hits with a confidence of zero are dropped.
    """
    if not isinstance(rules, RuleIndex):
        rules = RuleIndex(rules)
    candidates = CandidateScores(query)
    subject, t_star = query.subject, query.timestamp

    for rule in rules.matching(query):
        rule_window = rule.model.window if rule.model is not None else window
        if rule.rule_type is RuleType.xy:
            for obj in sorted(index.objects(rule.body_relation, subject)):
                delta_set = deltas_xy(index, rule.body_relation, subject, obj, t_star, rule_window)
                if delta_set:
                    _add_learned_hit(candidates, obj, rule, delta_set, variant, rule_window)
        elif rule.rule_type is RuleType.c:
            delta_set = deltas_c(index, rule.body_relation, subject, rule.body_constant, t_star, rule_window)
            if delta_set:
                _add_learned_hit(candidates, rule.head_constant, rule, delta_set, variant, rule_window)
        elif rule.static_conf:
            candidates.add(rule.head_constant, Hit(rule, rule.static_conf, None, None, None, None))

    return candidates.finalize(top_h)


def _add_learned_hit(candidates, candidate, rule, delta_set, variant, window):
    confidence, f, g = _learned_confidence(rule, delta_set, variant)
    if confidence:
        candidates.add(candidate, Hit(rule, confidence, delta_set.min, delta_set.count_within(window), f, g))


def aggregate(confidences, top_h, decay):
    """ Return the decayed noisy-or of the top_h highest confidences. """
    product = 1.0
    for i, confidence in enumerate(sorted(confidences, reverse=True)[:top_h]):
        product *= 1.0 - confidence * decay ** i
    return 1.0 - product


def rank(candidates, top_h, decay):
    """ Return [(candidate, score)] sorted by score descending, ties by ascending id. """
    scores = candidates.scores(top_h, decay)
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


ExplanationRow = namedtuple('ExplanationRow', 'rule confidence recency frequency_score min_delta frequency_ratio')


@dataclass
class Explanation:
    """ Why a candidate was predicted: one row per contributing rule, plus the aggregated score. """

    query: Query
    candidate: int
    score: float
    rows: List[ExplanationRow] = field(default_factory=list)
    query_text: str = ''
    candidate_name: str = ''

    def to_record(self):
        """ Return a JSON-compatible dict. """
        return {
            'query': {'subject': self.query.subject, 'relation': self.query.relation,
                      'timestamp': self.query.timestamp, 'text': self.query_text},
            'candidate': self.candidate,
            'candidate_name': self.candidate_name,
            'score': self.score,
            'rules': [row._asdict() for row in self.rows],
        }

    def format_text(self):
        """ Return a human-readable table. """
        lines = [f"{self.query_text} -> {self.candidate_name}  score {self.score:.4f}"]
        for row in self.rows:
            if row.recency is None:
                decomposition = 'static'
            else:
                decomposition = f"{row.recency:.2f}{row.frequency_score:+.2f}"
            features = ''
            if row.min_delta is not None:
                features = f"  min(Δ)={row.min_delta}  |Δ_W|/W={row.frequency_ratio:.2f}"
            lines.append(f"  {row.confidence:.4f}  {decomposition:>11}  {row.rule}{features}")
        return '\n'.join(lines)


def _query_text(query, vocabulary):
    if vocabulary is None:
        return f"{query.relation}({query.subject},?,{query.timestamp})"
    return (f"{vocabulary.relation_name(query.relation)}"
            f"({vocabulary.entity_name(query.subject)},?,{query.timestamp})")


def explain(query, candidate, candidates, top_h, decay, vocabulary=None):
    """ Return the Explanation of a candidate in the CandidateScores of a query.

    Raises KeyError if the candidate was not predicted.
    """
    if candidate not in candidates:
        raise KeyError(f"Candidate {candidate} was not predicted for {query}")
    hits = candidates.hits[candidate][:top_h]
    rows = []
    for hit in hits:
        window = hit.rule.model.window if hit.rule.model is not None else None
        ratio = hit.frequency / window if hit.frequency is not None and window else None
        rows.append(ExplanationRow(hit.rule.render(vocabulary), hit.confidence, hit.recency,
                                   hit.frequency_score, hit.min_delta, ratio))
    name = vocabulary.entity_name(candidate) if vocabulary is not None else str(candidate)
    return Explanation(query, candidate, aggregate([hit.confidence for hit in hits], top_h, decay),
                       rows, _query_text(query, vocabulary), name)


def predictions_header(metadata=None):
    """ Return the first line of a predictions file. """
    header = {'format': PREDICTIONS_FORMAT, 'version': PREDICTIONS_VERSION}
    header.update(metadata or {})
    return json.dumps(header, sort_keys=True)


def prediction_record(query, ranking, top_k, vocabulary=None):
    """ Return one line of a predictions file: a query and its top_k (candidate, score) pairs. """
    record = {'subject': query.subject, 'relation': query.relation, 'timestamp': query.timestamp,
              'candidates': [[candidate, score] for candidate, score in ranking[:top_k]]}
    if vocabulary is not None:
        record['names'] = [vocabulary.entity_name(candidate) for candidate, score in ranking[:top_k]]
    return json.dumps(record)
