""" Read temporal knowledge graph datasets and augment them with inverse relations.

A dataset consists of three splits (train, valid, test). Each split is a text file with one
fact per line, in four tab-separated columns:

    subject <TAB> relation <TAB> object <TAB> timestamp

A fifth column, present in some published datasets, is ignored. Subjects, relations and
objects are either integer ids (mode 'ids') or labels (mode 'names'), in which case ids are
assigned in order of first appearance, across train, valid and test in that order.

Timestamps are mapped to dense ticks 0, 1, 2, ... in chronological order, unless raw
timestamps are requested, so that the distance between two consecutive timestamps is always 1.
"""

import hashlib
import json
import logging
import os

from collections import namedtuple

Quadruple = namedtuple('Quadruple', 'subject relation object timestamp')

Dataset = namedtuple('Dataset', 'vocabulary train valid test')

SPLITS = ('train', 'valid', 'test')

INVERSE_SUFFIX = '^-1'


class DataError(ValueError):
    """ Raised when dataset or model input is malformed or inconsistent. """


class Vocabulary:
    """ Bidirectional mappings between names and dense ids, for entities and relations.

    Only the original relations are stored. Relation p (p < num_relations) has the inverse
    relation p + num_relations, and vice versa.
    """

    def __init__(self, entity_names, relation_names):
        self.entity_names = list(entity_names)
        self.relation_names = list(relation_names)
        self.entity_ids = {name: i for i, name in enumerate(self.entity_names)}
        self.relation_ids = {name: i for i, name in enumerate(self.relation_names)}

    @property
    def num_entities(self):
        """ Number of entities |C|. """
        return len(self.entity_names)

    @property
    def num_relations(self):
        """ Number of original relations R. """
        return len(self.relation_names)

    @property
    def num_all_relations(self):
        """ Number of relations after augmentation with inverses, 2R. """
        return 2 * len(self.relation_names)

    def is_inverse(self, relation):
        """ Return whether the relation id refers to an inverse relation. """
        return relation >= self.num_relations

    def inverse(self, relation):
        """ Return the id of the inverse of a relation (original or inverse). """
        return inverse_relation(relation, self.num_relations)

    def entity_name(self, entity):
        """ Return the name of an entity id, or a placeholder for ids outside the vocabulary. """
        if 0 <= entity < self.num_entities:
            return self.entity_names[entity]
        return f"<unknown:{entity}>"

    def relation_name(self, relation):
        """ Return the name of a relation id, with a suffix for inverse relations. """
        if self.is_inverse(relation):
            return self.relation_names[relation - self.num_relations] + INVERSE_SUFFIX
        return self.relation_names[relation]

    def entity_id(self, name):
        """ Return the id of an entity name. Integer strings are accepted as ids. """
        if name in self.entity_ids:
            return self.entity_ids[name]
        if name.isdigit() and int(name) < self.num_entities:
            return int(name)
        raise DataError(f"Unknown entity: {name!r}")

    def relation_id(self, name):
        """ Return the id of a relation name, accepting inverse names and integer ids. """
        if name in self.relation_ids:
            return self.relation_ids[name]
        if name.endswith(INVERSE_SUFFIX) and name[:-len(INVERSE_SUFFIX)] in self.relation_ids:
            return self.relation_ids[name[:-len(INVERSE_SUFFIX)]] + self.num_relations
        if name.isdigit() and int(name) < self.num_all_relations:
            return int(name)
        raise DataError(f"Unknown relation: {name!r}")

    def digest(self):
        """ Return a SHA-256 hex digest of the entity and relation names, in id order. """
        names = json.dumps([self.entity_names, self.relation_names], ensure_ascii=False)
        return hashlib.sha256(names.encode('utf-8')).hexdigest()

    def __eq__(self, other):
        """ Compare by value. """
        return (isinstance(other, Vocabulary) and self.entity_names == other.entity_names and
                self.relation_names == other.relation_names)

    def __repr__(self):
        """ Nicer repr. """
        return f"<{self.__class__.__name__} {self.num_entities} entities, {self.num_relations} relations>"


def inverse_relation(relation, num_relations):
    """ Return the inverse of a relation id, given the number of original relations. """
    if relation < num_relations:
        return relation + num_relations
    return relation - num_relations


def _split_lines(lines, split):
    """ Yield (line number, [subject, relation, object, timestamp]) for the non-empty lines of a split. """
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip('\r\n')
        if not line.strip():
            continue
        columns = line.split('\t')
        if len(columns) not in (4, 5):
            raise DataError(f"{split}:{lineno}: expected 4 tab-separated columns, found {len(columns)}: {line!r}")
        yield lineno, [column.strip() for column in columns[:4]]


def _parse_id(value, split, lineno, what):
    if not value.isdigit():
        raise DataError(f"{split}:{lineno}: {what} must be a non-negative integer, found {value!r}")
    return int(value)


def _timestamp_mapping(raw_timestamps, dense):
    """ Return a dict from raw timestamp strings to integer ticks. """
    distinct = set(raw_timestamps)
    if all(value.isdigit() for value in distinct):
        ordered = sorted(distinct, key=int)
        if not dense:
            return {value: int(value) for value in ordered}
    else:
        if not dense:
            bad = next(value for value in sorted(distinct) if not value.isdigit())
            raise DataError(f"Raw timestamps must be non-negative integers, found {bad!r}")
        # Non-integer stamps (e.g. ISO dates) sort chronologically as strings
        ordered = sorted(distinct)
    return {value: tick for tick, value in enumerate(ordered)}


def parse_dataset(train_lines, valid_lines=(), test_lines=(), mode='ids', dense_timestamps=True):
    """ Parse the three splits of a dataset and return a Dataset of Quadruple lists.

    The splits are not augmented with inverse relations; use augment_with_inverses() for that.
    Raises DataError for malformed lines (naming the split and line number) and for splits which
    are not temporally disjoint and ordered.
    """
    if mode not in ('ids', 'names'):
        raise ValueError(f"Unknown dataset mode: {mode!r}")

    rows = {}
    for split, lines in zip(SPLITS, (train_lines, valid_lines, test_lines)):
        rows[split] = list(_split_lines(lines, split))

    ticks = _timestamp_mapping([columns[3] for split in SPLITS for _, columns in rows[split]],
                               dense_timestamps)

    if mode == 'names':
        entities = {}
        relations = {}
        for split in SPLITS:
            for _, (subject, relation, obj, _) in rows[split]:
                entities.setdefault(subject, len(entities))
                relations.setdefault(relation, len(relations))
                entities.setdefault(obj, len(entities))
        vocabulary = Vocabulary(entities, relations)
    else:
        max_entity = max_relation = -1
        for split in SPLITS:
            for lineno, (subject, relation, obj, _) in rows[split]:
                max_entity = max(max_entity, _parse_id(subject, split, lineno, 'subject'),
                                 _parse_id(obj, split, lineno, 'object'))
                max_relation = max(max_relation, _parse_id(relation, split, lineno, 'relation'))
        vocabulary = Vocabulary([str(i) for i in range(max_entity + 1)],
                                [str(i) for i in range(max_relation + 1)])

    splits = {}
    for split in SPLITS:
        quads = []
        for _, (subject, relation, obj, timestamp) in rows[split]:
            if mode == 'names':
                quads.append(Quadruple(vocabulary.entity_ids[subject], vocabulary.relation_ids[relation],
                                       vocabulary.entity_ids[obj], ticks[timestamp]))
            else:
                quads.append(Quadruple(int(subject), int(relation), int(obj), ticks[timestamp]))
        splits[split] = quads

    check_split_order(splits['train'], splits['valid'], splits['test'])

    logging.info(f"Parsed dataset with {vocabulary.num_entities} entities, {vocabulary.num_relations} "
                 f"relations and {len(ticks)} timestamps: " +
                 ", ".join(f"{split}={len(splits[split])}" for split in SPLITS))

    return Dataset(vocabulary, splits['train'], splits['valid'], splits['test'])


def check_split_order(train, valid, test):
    """ Check that max(train) < min(valid) <= max(valid) < min(test), ignoring empty splits. """
    previous_name = previous_max = None
    for name, quads in zip(SPLITS, (train, valid, test)):
        if not quads:
            continue
        timestamps = [quad.timestamp for quad in quads]
        if previous_max is not None and min(timestamps) <= previous_max:
            raise DataError(f"Split {name} starts at timestamp {min(timestamps)}, which does not follow "
                            f"the end of split {previous_name} at {previous_max}")
        previous_name, previous_max = name, max(timestamps)


def load_dataset(train_path, valid_path=None, test_path=None, mode='ids', dense_timestamps=True):
    """ Read a dataset from UTF-8 files. Missing valid or test paths give empty splits. """
    contents = []
    for path in (train_path, valid_path, test_path):
        if path is None:
            contents.append([])
        else:
            with open(path, encoding='utf-8') as f:
                contents.append(f.readlines())
    return parse_dataset(*contents, mode=mode, dense_timestamps=dense_timestamps)


def write_mappings(vocabulary, directory):
    """ Write entity2id.txt and relation2id.txt files for a vocabulary built in 'names' mode. """
    for filename, names in (('entity2id.txt', vocabulary.entity_names),
                            ('relation2id.txt', vocabulary.relation_names)):
        with open(os.path.join(directory, filename), 'w', encoding='utf-8') as f:
            for i, name in enumerate(names):
                f.write(f"{name}\t{i}\n")


def augment_with_inverses(quads, num_relations):
    """ Return the quadruples followed by their inverses (o, p + R, s, t).

    Raises DataError if any relation id is already >= R, which means that the graph has already
    been augmented. Callers must not augment twice.
    """
    quads = list(quads)
    for quad in quads:
        if quad.relation >= num_relations:
            raise DataError(f"Relation {quad.relation} >= {num_relations} in {quad}: "
                            "graph is already augmented with inverse relations")
    return quads + [inverse_quadruple(quad, num_relations) for quad in quads]


def inverse_quadruple(quad, num_relations):
    """ Return the inverse form of a quadruple, (o, p^-1, s, t). Applying it twice is the identity. """
    return Quadruple(quad.object, inverse_relation(quad.relation, num_relations), quad.subject,
                     quad.timestamp)
