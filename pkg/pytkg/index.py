""" Index of a temporal knowledge graph, and retrieval of time distances (Δ sets).

The index answers "at which timestamps did p(s, o) hold before t?" with a dictionary lookup
and a binary search. All retrieval used for prediction goes through timestamps_before(), which
only ever returns timestamps strictly less than the cutoff.
"""

import bisect
import logging

from collections import defaultdict

from pytkg.dataset import DataError


class TemporalOrderError(DataError):
    """ Raised when facts are added to an index out of temporal order. """


class DeltaSet:
    """ Sorted (ascending) set of positive time distances t* - t' from body groundings to t*.

    Distances beyond the window may have been discarded when the set was built, except that
    the smallest distance is always kept, so that min and count_within(window) are exact.
    """

    __slots__ = ('distances',)

    def __init__(self, distances=()):
        self.distances = tuple(sorted(distances))
        assert all(distance >= 1 for distance in self.distances), self.distances

    @classmethod
    def from_timestamps(cls, timestamps, t_star):
        """ Build from sorted timestamps, all of which must be earlier than t_star. """
        return cls(t_star - timestamp for timestamp in reversed(timestamps))

    @property
    def min(self):
        """ The smallest distance, i.e. the recency feature. """
        if not self.distances:
            raise ValueError("min() of an empty DeltaSet")
        return self.distances[0]

    def count_within(self, window):
        """ Number of distances <= window, i.e. the frequency feature |Δ_W|. """
        return bisect.bisect_right(self.distances, window)

    def __len__(self):
        """ Number of items. """
        return len(self.distances)

    def __bool__(self):
        """ Whether the set is non-empty. """
        return bool(self.distances)

    def __iter__(self):
        """ Iterate in ascending order. """
        return iter(self.distances)

    def __eq__(self, other):
        """ Compare by value. """
        return isinstance(other, DeltaSet) and self.distances == other.distances

    def __repr__(self):
        """ Nicer repr. """
        return f"<{self.__class__.__name__} {list(self.distances)}>"


class TemporalIndex:
    """ Read-optimised index over (augmented) quadruples.

    Keys are stored per (relation, subject, object) with a strictly ascending list of
    timestamps. Secondary structures give the objects of a (relation, subject), the relations
    connecting a (subject, object) pair and the objects of a (relation, subject) at each
    timestamp. The index is not changed after construction except by extend().
    """

    def __init__(self, quads=()):
        self._timestamps = {}
        self._objects = defaultdict(set)
        self._relations = defaultdict(set)
        self._events = defaultdict(dict)
        self._subjects = defaultdict(set)
        self._all_timestamps = []
        self.num_facts = 0

        distinct = set()
        pending = defaultdict(set)
        for subject, relation, obj, timestamp in quads:
            if timestamp < 0:
                raise DataError(f"Negative timestamp in {(subject, relation, obj, timestamp)}")
            pending[(relation, subject, obj)].add(timestamp)
            distinct.add(timestamp)

        for (relation, subject, obj), timestamps in pending.items():
            self._add_key(relation, subject, obj, sorted(timestamps))

        self._all_timestamps = sorted(distinct)
        logging.debug(f"Built index with {self.num_facts} facts over {len(self._all_timestamps)} timestamps")

    def _add_key(self, relation, subject, obj, timestamps):
        key = (relation, subject, obj)
        existing = self._timestamps.get(key)
        if existing is None:
            self._timestamps[key] = existing = []
            self._objects[(relation, subject)].add(obj)
            self._relations[(subject, obj)].add(relation)
            self._subjects[relation].add(subject)
        existing.extend(timestamps)
        events = self._events[(relation, subject)]
        for timestamp in timestamps:
            events.setdefault(timestamp, set()).add(obj)
        self.num_facts += len(timestamps)

    def timestamps(self, relation, subject, obj):
        """ Return all timestamps of relation(subject, obj), ascending. Used for learning only. """
        return self._timestamps.get((relation, subject, obj), [])

    def timestamps_before(self, relation, subject, obj, before, window=None):
        """ Return the timestamps t' < before of relation(subject, obj), ascending.

        If a window is given, timestamps earlier than before - window are dropped, except that
        the latest timestamp before the cutoff is always returned (if there is one).
        """
        timestamps = self._timestamps.get((relation, subject, obj))
        if not timestamps:
            return []
        end = bisect.bisect_left(timestamps, before)
        if window is None:
            return timestamps[:end]
        start = bisect.bisect_left(timestamps, before - window, 0, end)
        if start == end and end > 0:
            start = end - 1
        return timestamps[start:end]

    def objects(self, relation, subject):
        """ Return the set of objects o with relation(subject, o) at any timestamp. """
        return self._objects.get((relation, subject), frozenset())

    def subjects(self, relation):
        """ Return the set of subjects that occur with a relation. """
        return self._subjects.get(relation, frozenset())

    def relations(self):
        """ Return the sorted list of relation ids that occur in the index. """
        return sorted(relation for relation, subjects in self._subjects.items() if subjects)

    def pairs(self):
        """ Iterate over ((subject, object), relations) for every connected pair. """
        return self._relations.items()

    def events(self, relation, subject):
        """ Return a dict from timestamp to the set of objects o with relation(subject, o, timestamp). """
        return self._events.get((relation, subject), {})

    def keys(self):
        """ Iterate over all (relation, subject, object) keys. """
        return self._timestamps.keys()

    def entity_counts(self):
        """ Return a dict from entity id to its number of occurrences as subject in the index.

        For an index over augmented quadruples this equals the number of occurrences as subject
        or object in the original graph.
        """
        counts = defaultdict(int)
        for (relation, subject, obj), timestamps in self._timestamps.items():
            counts[subject] += len(timestamps)
        return counts

    def extend(self, quads):
        """ Add facts which all share one timestamp, later than every timestamp in the index.

        Raises TemporalOrderError otherwise. Queries at t* <= t are unaffected.
        """
        quads = list(quads)
        if not quads:
            return
        timestamps = {quad.timestamp for quad in quads}
        if len(timestamps) != 1:
            raise TemporalOrderError(f"extend() requires facts at a single timestamp, got {sorted(timestamps)}")
        timestamp = timestamps.pop()
        if self._all_timestamps and timestamp <= self._all_timestamps[-1]:
            raise TemporalOrderError(f"Cannot add facts at {timestamp}: index already holds facts up to "
                                     f"{self._all_timestamps[-1]}")

        for relation, subject, obj in sorted({(quad.relation, quad.subject, quad.object) for quad in quads}):
            self._add_key(relation, subject, obj, [timestamp])
        self._all_timestamps.append(timestamp)

    def __repr__(self):
        """ Nicer repr. """
        return f"<{self.__class__.__name__} {self.num_facts} facts, {len(self._all_timestamps)} timestamps>"


def build_index(quads):
    """ Build a TemporalIndex over (augmented) quadruples. Duplicates are stored once. """
    return TemporalIndex(quads)


def extend_index(index, quads):
    """ Add the facts of one new timestamp to an index. See TemporalIndex.extend(). """
    index.extend(quads)


def deltas_xy(index, relation, subject, obj, t_star, window=None):
    """ Return the DeltaSet {t* - t' : relation(subject, obj, t') in G, t' < t*}.

    With a window, distances beyond it are dropped except the smallest one.
    """
    if t_star <= 0:
        # Timestamps are non-negative, so nothing precedes t* = 0
        return DeltaSet()
    return DeltaSet.from_timestamps(index.timestamps_before(relation, subject, obj, t_star, window), t_star)


def deltas_c(index, relation, subject, body_constant, t_star, window=None):
    """ Return the DeltaSet of a c-rule body relation(subject, body_constant) at t*.

    This is the xy case with the object fixed to the rule's body constant.
    """
    return deltas_xy(index, relation, subject, body_constant, t_star, window)
