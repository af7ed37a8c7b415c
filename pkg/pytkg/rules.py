""" Temporal rules with a single body atom, their enumeration and their file format.

Four types of rules are supported:

    xy:  h(x, y, t*) <- b(x, y, t), t* > t       (recurrent if h = b)
    c:   h(x, d, t*) <- b(x, d', t), t* > t      (d, d' frequent constants)
    z:   p(x, d, t)  <- exists z p(x, z, t)
    f:   p(c, d, t)  <- exists z p(c, z, t)

xy- and c-rules carry a learned ConfidenceModel (see pytkg.confidence and pytkg.learning),
z- and f-rules a static confidence counted over (constant, timestamp) combinations.

A rule file is line-delimited JSON: a header record naming the format and version, followed by
one self-describing record per rule.
"""

import bisect
import json
import logging

from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from pytkg.confidence import ConfidenceModel
from pytkg.dataset import DataError

FORMAT_NAME = 'pytkg-rules'
FORMAT_VERSION = 1


class RuleFileError(DataError):
    """ Raised when a rule file cannot be parsed. """


class RuleType(Enum):
    """ The four rule types, in their canonical order. """

    xy = 'xy'
    c = 'c'
    z = 'z'
    f = 'f'

    def order(self):
        """ Return the position of this type in the canonical order. """
        return list(RuleType).index(self)


# Number of constants carried by each rule type
_CONSTANT_COUNTS = {RuleType.xy: 0, RuleType.c: 2, RuleType.z: 1, RuleType.f: 2}


@dataclass
class Rule:
    """ One rule: its type and symbols, plus learned parameters and support statistics.

    constants holds (head constant d, body constant d') for c-rules, (object d,) for z-rules and
    (subject c, object d) for f-rules.
    """

    rule_type: RuleType
    head_relation: int
    body_relation: Optional[int] = None
    constants: Tuple[int, ...] = ()
    model: Optional[ConfidenceModel] = None
    static_conf: Optional[float] = None
    support: int = 0
    positives: int = 0

    def __post_init__(self):
        self.constants = tuple(self.constants)
        assert len(self.constants) == _CONSTANT_COUNTS[self.rule_type], self
        assert (self.body_relation is None) == (self.rule_type in (RuleType.z, RuleType.f)), self

    @property
    def key(self):
        """ Sort key and unique identity: type, head, body and constants. """
        body = -1 if self.body_relation is None else self.body_relation
        return (self.rule_type.order(), self.head_relation, body, self.constants)

    @property
    def recurrent(self):
        """ Whether this is an xy-rule whose head and body relations are the same. """
        return self.rule_type is RuleType.xy and self.head_relation == self.body_relation

    @property
    def learned(self):
        """ Whether this rule's confidence depends on the Δ set (xy- and c-rules). """
        return self.rule_type in (RuleType.xy, RuleType.c)

    @property
    def head_constant(self):
        """ The object constant predicted by a c-, z- or f-rule. """
        return self.constants[0] if self.rule_type is RuleType.c else self.constants[-1]

    @property
    def body_constant(self):
        """ The body object constant d' of a c-rule. """
        assert self.rule_type is RuleType.c
        return self.constants[1]

    @property
    def subject_constant(self):
        """ The subject constant c of an f-rule. """
        assert self.rule_type is RuleType.f
        return self.constants[0]

    def render(self, vocabulary=None):
        """ Return the rule in human-readable form, using names if a vocabulary is given. """
        def relation(relation_id):
            return vocabulary.relation_name(relation_id) if vocabulary else str(relation_id)

        def entity(entity_id):
            return vocabulary.entity_name(entity_id) if vocabulary else str(entity_id)

        head = relation(self.head_relation)
        if self.rule_type is RuleType.xy:
            return f"{head}(x,y,t*) <- {relation(self.body_relation)}(x,y,t)"
        elif self.rule_type is RuleType.c:
            return (f"{head}(x,{entity(self.constants[0])},t*) <- "
                    f"{relation(self.body_relation)}(x,{entity(self.constants[1])},t)")
        elif self.rule_type is RuleType.z:
            return f"{head}(x,{entity(self.constants[0])},t) <- exists z {head}(x,z,t)"
        else:
            subject = entity(self.constants[0])
            return f"{head}({subject},{entity(self.constants[1])},t) <- exists z {head}({subject},z,t)"

    def to_record(self, vocabulary=None):
        """ Return a JSON-compatible dict describing this rule. """
        record = {'type': self.rule_type.value, 'head_relation': self.head_relation}
        if self.body_relation is not None:
            record['body_relation'] = self.body_relation
        if self.constants:
            record['constants'] = list(self.constants)
        if self.model is not None:
            record['params'] = self.model.to_dict()
        if self.static_conf is not None:
            record['static_conf'] = self.static_conf
        record['support'] = self.support
        record['positives'] = self.positives
        if vocabulary is not None:
            # Informational only, ignored when parsing
            record['text'] = self.render(vocabulary)
        return record

    @classmethod
    def from_record(cls, record):
        """ Inverse of to_record(). """
        params = record.get('params')
        return cls(rule_type=RuleType(record['type']),
                   head_relation=int(record['head_relation']),
                   body_relation=record.get('body_relation'),
                   constants=tuple(int(constant) for constant in record.get('constants', ())),
                   model=None if params is None else ConfidenceModel.from_dict(params),
                   static_conf=record.get('static_conf'),
                   support=int(record['support']),
                   positives=int(record['positives']))

    def __repr__(self):
        """ Nicer repr. """
        return f"<{self.__class__.__name__} {self.render()}>"


class RuleSet(list):
    """ A list of rules in canonical order, with metadata from the rule file header. """

    def __init__(self, rules=(), metadata=None):
        super().__init__(rules)
        self.metadata = dict(metadata or {})

    def counts(self):
        """ Return a dict from rule type name to the number of rules of that type. """
        counts = Counter(rule.rule_type.value for rule in self)
        return {rule_type.value: counts.get(rule_type.value, 0) for rule_type in RuleType}


def sort_rules(rules):
    """ Return the rules in canonical order, checking that no rule occurs twice. """
    ordered = sorted(rules, key=lambda rule: rule.key)
    for previous, rule in zip(ordered, ordered[1:]):
        if previous.key == rule.key:
            raise ValueError(f"Duplicate rule: {rule}")
    return ordered


def enumerate_xy_rules(index, min_support):
    """ Return candidate xy-rules (h <- b) with at least min_support examples in the index.

    The support of (h, b) is the number of facts h(c, d, t) for which some b(c, d, t') with
    t' < t exists. Pairs of relations which never co-occur in that order are never returned.
    """
    support = Counter()
    for (subject, obj), relations in index.pairs():
        firsts = {body: index.timestamps(body, subject, obj)[0] for body in relations}
        for head in relations:
            head_timestamps = index.timestamps(head, subject, obj)
            for body, first in firsts.items():
                later = len(head_timestamps) - bisect.bisect_right(head_timestamps, first)
                if later:
                    support[(head, body)] += later

    rules = [Rule(RuleType.xy, head, body, support=count)
             for (head, body), count in sorted(support.items()) if count >= min_support]
    logging.info(f"Found {len(rules)} xy-rule candidates out of {len(support)} co-occurring relation pairs")
    return rules


def frequent_constants(index, k):
    """ Return the k most frequent entities, by count descending then id ascending. """
    counts = index.entity_counts()
    return sorted(counts, key=lambda entity: (-counts[entity], entity))[:k]


def enumerate_c_rules(index, constants, min_support, window):
    """ Return candidate c-rules h(x, d) <- b(x, d') with d and d' among the given constants.

    The support of a candidate is the number of facts h(c, d, t) for which some b(c, d', t')
    with t - window <= t' < t exists. The rule h(x, d) <- h(x, d) is left out, since it
    fires exactly when the recurrent xy-rule of h does.
    """
    constants = set(constants)
    atoms_by_subject = defaultdict(list)
    for relation, subject, obj in index.keys():
        if obj in constants:
            atoms_by_subject[subject].append((relation, obj))

    support = Counter()
    for subject, atoms in atoms_by_subject.items():
        timestamps = {atom: index.timestamps(atom[0], subject, atom[1]) for atom in atoms}
        for head_atom in atoms:
            head_timestamps = timestamps[head_atom]
            for body_atom in atoms:
                if body_atom == head_atom:
                    continue
                body_timestamps = timestamps[body_atom]
                if body_timestamps[0] >= head_timestamps[-1]:
                    continue
                count = 0
                for t in head_timestamps:
                    i = bisect.bisect_left(body_timestamps, t)
                    if i > 0 and body_timestamps[i - 1] >= t - window:
                        count += 1
                if count:
                    support[(head_atom[0], head_atom[1], body_atom[0], body_atom[1])] += count

    rules = [Rule(RuleType.c, head, body, (head_constant, body_constant), support=count)
             for (head, head_constant, body, body_constant), count in sorted(support.items())
             if count >= min_support]
    logging.info(f"Found {len(rules)} c-rule candidates over {len(constants)} frequent constants")
    return rules


def compute_z_confidences(index, smoothing):
    """ Return z-rules p(x, d, t) <- exists z p(x, z, t) with their static confidences.

    The confidence is |{(x, t) : p(x, d, t)}| / (|{(x, t) : exists z p(x, z, t)}| + smoothing).
    """
    numerators = Counter()
    denominators = Counter()
    for relation in index.relations():
        for subject in index.subjects(relation):
            events = index.events(relation, subject)
            denominators[relation] += len(events)
            for objects in events.values():
                for obj in objects:
                    numerators[(relation, obj)] += 1

    return [Rule(RuleType.z, relation, None, (obj,),
                 static_conf=count / (denominators[relation] + smoothing),
                 support=denominators[relation], positives=count)
            for (relation, obj), count in sorted(numerators.items())]


def compute_f_confidences(index, smoothing):
    """ Return f-rules p(c, d, t) <- exists z p(c, z, t) with their static confidences.

    The confidence is |{t : p(c, d, t)}| / (|{t : exists z p(c, z, t)}| + smoothing), so it only
    depends on the facts of subject c.
    """
    rules = []
    for relation in index.relations():
        for subject in sorted(index.subjects(relation)):
            denominator = len(index.events(relation, subject))
            for obj in sorted(index.objects(relation, subject)):
                count = len(index.timestamps(relation, subject, obj))
                rules.append(Rule(RuleType.f, relation, None, (subject, obj),
                                  static_conf=count / (denominator + smoothing),
                                  support=denominator, positives=count))
    return rules


# Rule type selections, for evaluating subsets of a rule set
RULE_SELECTIONS = ('all', 'rec', 'xy', 'c', 'z', 'f', 'all-xy', 'all-c', 'all-z', 'all-f', 'none')


def _selection_matches(part, rule):
    if part == 'rec':
        return rule.recurrent
    return rule.rule_type.value == part


def select_rules(rules, selection):
    """ Return the rules matching a selection.

    A selection is 'all', 'none', 'all-<type>' (all rules except one type), or a comma-separated
    list of types, where 'rec' means recurrent xy-rules only and 'xy' includes them.
    """
    selection = selection.strip()
    if selection == 'all':
        return list(rules)
    if selection in ('none', ''):
        return []
    if selection.startswith('all-'):
        excluded = selection[len('all-'):]
        if excluded not in ('xy', 'c', 'z', 'f'):
            raise ValueError(f"Unknown rule selection: {selection!r}")
        return [rule for rule in rules if rule.rule_type.value != excluded]

    parts = [part.strip() for part in selection.split(',')]
    for part in parts:
        if part not in ('rec', 'xy', 'c', 'z', 'f'):
            raise ValueError(f"Unknown rule selection: {selection!r}")
    return [rule for rule in rules if any(_selection_matches(part, rule) for part in parts)]


def serialize_rules(rules, stream, metadata=None, vocabulary=None):
    """ Write rules to a text stream: a header line, then one JSON record per rule. """
    header = {'format': FORMAT_NAME, 'version': FORMAT_VERSION}
    header.update(metadata or {})
    header['num_rules'] = len(rules)
    stream.write(json.dumps(header, sort_keys=True) + '\n')
    for rule in rules:
        stream.write(json.dumps(rule.to_record(vocabulary)) + '\n')


def parse_rules(stream):
    """ Read a rule file written by serialize_rules() and return a RuleSet.

    Raises RuleFileError for a missing or foreign header, a version mismatch, malformed or
    duplicate records, and files with fewer records than the header announces.
    """
    lines = iter(stream)
    header_line = next(lines, '')
    try:
        header = json.loads(header_line)
    except json.JSONDecodeError:
        raise RuleFileError(f"line 1: not a {FORMAT_NAME} header: {header_line[:80]!r}")
    if not isinstance(header, dict) or header.get('format') != FORMAT_NAME:
        raise RuleFileError(f"line 1: not a {FORMAT_NAME} header: {header_line[:80]!r}")
    if header.get('version') != FORMAT_VERSION:
        raise RuleFileError(f"Unsupported rule file version {header.get('version')!r}, "
                            f"expected {FORMAT_VERSION}")

    rules = []
    seen = set()
    for lineno, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        try:
            rule = Rule.from_record(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, AssertionError) as exc:
            raise RuleFileError(f"line {lineno}: malformed rule record ({exc}): {line[:80]!r}")
        if rule.key in seen:
            raise RuleFileError(f"line {lineno}: duplicate rule {rule.render()}")
        seen.add(rule.key)
        rules.append(rule)

    expected = header.pop('num_rules', None)
    if expected is not None and expected != len(rules):
        raise RuleFileError(f"Rule file is truncated: header announces {expected} rules, "
                            f"found {len(rules)}")

    for name in ('format', 'version'):
        header.pop(name)
    return RuleSet(rules, header)
