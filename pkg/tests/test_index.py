""" Tests for the index module. """

import random
import unittest

from pytkg.dataset import DataError, Quadruple
from pytkg.index import DeltaSet, TemporalOrderError, build_index, deltas_c, deltas_xy, extend_index

from tests.oracles import brute_force_deltas, random_graph


class DeltaSetTest(unittest.TestCase):
    """ Tests for the DeltaSet class. """

    def test_features(self):
        """ Test min() and count_within() of a DeltaSet. """
        delta_set = DeltaSet([2, 1, 60])
        self.assertEqual(1, delta_set.min)
        self.assertEqual(2, delta_set.count_within(50))
        self.assertEqual([1, 2, 60], list(delta_set))

    def test_empty(self):
        """ Test that an empty DeltaSet is falsy and has no min. """
        self.assertFalse(DeltaSet())
        with self.assertRaises(ValueError):
            DeltaSet().min


class TemporalIndexTest(unittest.TestCase):
    """ Tests for TemporalIndex, build_index() and extend_index(). """

    def test_dedup(self):
        """ Test that timestamps are sorted and stored once per key. """
        index = build_index([Quadruple(0, 0, 1, t) for t in (7, 3, 9, 7)] + [Quadruple(0, 0, 1, 3)])
        self.assertEqual([3, 7, 9], index.timestamps(0, 0, 1))
        self.assertIn('3 timestamps', repr(index))
        self.assertEqual({1}, index.objects(0, 0))
        self.assertEqual({7: {1}, 3: {1}, 9: {1}}, index.events(0, 0))

    def test_negative_timestamp(self):
        """ Test that negative timestamps are rejected. """
        with self.assertRaises(DataError):
            build_index([Quadruple(0, 0, 1, -1)])

    def test_timestamps_before(self):
        """ Test that retrieval is strictly before the cutoff, and windows keep the latest timestamp. """
        index = build_index([Quadruple(0, 0, 1, t) for t in (1, 5, 10, 20)])
        self.assertEqual([1, 5], index.timestamps_before(0, 0, 1, 10))
        self.assertEqual([5, 10], index.timestamps_before(0, 0, 1, 11, window=6))
        self.assertEqual([10], index.timestamps_before(0, 0, 1, 19, window=2))
        self.assertEqual([], index.timestamps_before(0, 0, 1, 1))
        self.assertEqual([], index.timestamps_before(0, 0, 2, 100))

    def test_random_lookups(self):
        """ Test that lookups agree with a scan of the quadruple list. """
        quads, _ = random_graph(1, num_facts=1000, num_entities=10, num_timestamps=40)
        index = build_index(quads)
        rng = random.Random(2)
        for _ in range(100):
            quad = rng.choice(quads)
            expected = sorted({q.timestamp for q in quads
                               if (q.relation, q.subject, q.object) == (quad.relation, quad.subject, quad.object)})
            self.assertEqual(expected, index.timestamps(quad.relation, quad.subject, quad.object))

    def test_extend(self):
        """ Test that extended facts are visible only strictly after their timestamp. """
        index = build_index([Quadruple(0, 0, 1, 5)])
        extend_index(index, [Quadruple(0, 0, 1, 10), Quadruple(0, 0, 2, 10)])
        self.assertEqual(DeltaSet([1, 6]), deltas_xy(index, 0, 0, 1, 11))
        self.assertEqual(DeltaSet([5]), deltas_xy(index, 0, 0, 1, 10))
        self.assertFalse(deltas_xy(index, 0, 0, 2, 10))
        self.assertEqual({1, 2}, index.objects(0, 0))

    def test_extend_out_of_order(self):
        """ Test that facts at or before the latest timestamp, or at mixed timestamps, are rejected. """
        index = build_index([Quadruple(0, 0, 1, 5)])
        with self.assertRaises(TemporalOrderError):
            extend_index(index, [Quadruple(0, 0, 1, 5)])
        with self.assertRaises(TemporalOrderError):
            extend_index(index, [Quadruple(0, 0, 1, 6), Quadruple(0, 0, 1, 7)])

    def test_extend_equals_rebuild(self):
        """ Test that replaying later timestamps with extend_index() gives the same index as rebuilding. """
        quads, _ = random_graph(3, num_facts=300, num_timestamps=15)
        early = [quad for quad in quads if quad.timestamp < 8]
        index = build_index(early)
        for t in range(8, 15):
            extend_index(index, [quad for quad in quads if quad.timestamp == t])

        rebuilt = build_index(quads)
        self.assertEqual(sorted(rebuilt.keys()), sorted(index.keys()))
        for key in rebuilt.keys():
            self.assertEqual(rebuilt.timestamps(*key), index.timestamps(*key))
            self.assertEqual(rebuilt.events(key[0], key[1]), index.events(key[0], key[1]))


class DeltasTest(unittest.TestCase):
    """ Tests for deltas_xy() and deltas_c(). """

    def test_examples(self):
        """ Test Δ sets of a few hand-computed cases. """
        index = build_index([Quadruple(0, 0, 1, 349), Quadruple(0, 0, 1, 350)])
        delta_set = deltas_xy(index, 0, 0, 1, 351)
        self.assertEqual(DeltaSet([1, 2]), delta_set)
        self.assertEqual(2, delta_set.count_within(50))
        self.assertFalse(deltas_xy(index, 0, 1, 0, 351))

        index = build_index([Quadruple(0, 0, 1, t) for t in range(1, 101)])
        delta_set = deltas_xy(index, 0, 0, 1, 101, window=50)
        self.assertEqual(1, delta_set.min)
        self.assertEqual(50, delta_set.count_within(50))

        index = build_index([Quadruple(0, 0, 7, 2), Quadruple(0, 0, 7, 4)])
        self.assertEqual(DeltaSet([1, 3]), deltas_c(index, 0, 0, 7, 5))
        self.assertFalse(deltas_c(index, 0, 0, 8, 5))
        self.assertFalse(deltas_xy(index, 0, 0, 7, 0))

    def test_windowed_min_retained(self):
        """ Test that a window drops old distances but keeps the smallest one. """
        index = build_index([Quadruple(0, 0, 1, 1), Quadruple(0, 0, 1, 2)])
        self.assertEqual(DeltaSet([98]), deltas_xy(index, 0, 0, 1, 100, window=50))

    def test_brute_force(self):
        """ Test that Δ sets equal a brute-force filter on random graphs, for every key and cutoff. """
        for seed in range(5):
            quads, _ = random_graph(seed, num_facts=150, num_entities=5, num_relations=2, num_timestamps=12)
            index = build_index(quads)
            for relation, subject, obj in index.keys():
                for t_star in range(0, 14):
                    self.assertEqual(brute_force_deltas(quads, relation, subject, obj, t_star),
                                     list(deltas_xy(index, relation, subject, obj, t_star)))
