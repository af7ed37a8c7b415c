""" Tests for the rules module. """

import io
import unittest

from pytkg.confidence import ConfidenceModel
from pytkg.dataset import Quadruple, Vocabulary, augment_with_inverses
from pytkg.index import build_index
from pytkg.rules import (Rule, RuleFileError, RuleType, compute_f_confidences, compute_z_confidences,
                         enumerate_c_rules, enumerate_xy_rules, frequent_constants, parse_rules,
                         select_rules, serialize_rules, sort_rules)

from tests.oracles import brute_force_f, brute_force_z, random_graph

# Relations of the dating fixture
DATED, ENGAGED = 0, 1


def dating_index():
    """ Return an index where dating precedes dating again, and dating precedes engagement. """
    quads = [Quadruple(0, DATED, 1, 1), Quadruple(0, DATED, 1, 2), Quadruple(0, ENGAGED, 1, 3),
             Quadruple(2, DATED, 3, 1), Quadruple(2, DATED, 3, 4), Quadruple(2, ENGAGED, 3, 5)]
    return build_index(augment_with_inverses(quads, 2))


class EnumerationTest(unittest.TestCase):
    """ Tests for enumerating xy- and c-rules. """

    def test_xy_rules(self):
        """ Test that dated <- dated and engaged <- dated are found, but not dated <- engaged. """
        rules = enumerate_xy_rules(dating_index(), min_support=2)
        pairs = {(rule.head_relation, rule.body_relation) for rule in rules}
        self.assertIn((DATED, DATED), pairs)
        self.assertIn((ENGAGED, DATED), pairs)
        self.assertNotIn((DATED, ENGAGED), pairs)
        self.assertTrue(all(rule.rule_type is RuleType.xy for rule in rules))
        self.assertTrue(len(rules) <= 4 ** 2)

    def test_xy_support(self):
        """ Test the support counts and the min_support threshold. """
        rules = {(rule.head_relation, rule.body_relation): rule for rule in enumerate_xy_rules(dating_index(), 1)}
        self.assertEqual(2, rules[(DATED, DATED)].support)
        self.assertEqual(2, rules[(ENGAGED, DATED)].support)
        self.assertEqual([], enumerate_xy_rules(dating_index(), 3))

    def test_no_temporal_order(self):
        """ Test that relations which only co-occur at the same timestamp give no rule. """
        index = build_index([Quadruple(0, 0, 1, 1), Quadruple(0, 1, 1, 1)])
        self.assertEqual([], enumerate_xy_rules(index, 1))

    def test_frequent_constants(self):
        """ Test that constants are ordered by count, then id. """
        # Entities 0 and 1 occur 5 times each, entity 2 twice (a self-loop)
        quads = [Quadruple(0, 0, 1, t) for t in range(4)] + [Quadruple(1, 0, 0, 4), Quadruple(2, 0, 2, 5)]
        index = build_index(augment_with_inverses(quads, 1))
        self.assertEqual([], frequent_constants(index, 0))
        self.assertEqual([0, 1], frequent_constants(index, 2))
        self.assertEqual([0, 1, 2], frequent_constants(index, 10))

    def test_c_rules(self):
        """ Test that studied(x, uva) <- born(x, amsterdam) is found. """
        born, studied = 0, 1
        amsterdam, uva = 10, 11
        quads = [Quadruple(0, born, amsterdam, 1), Quadruple(0, studied, uva, 5),
                 Quadruple(1, born, amsterdam, 2), Quadruple(1, studied, uva, 7)]
        index = build_index(quads)
        rules = enumerate_c_rules(index, [amsterdam, uva], min_support=2, window=50)
        self.assertEqual([(studied, uva, born, amsterdam)],
                         [(rule.head_relation, rule.head_constant, rule.body_relation, rule.body_constant)
                          for rule in rules])
        self.assertEqual([], enumerate_c_rules(index, [], min_support=1, window=50))
        self.assertEqual([], enumerate_c_rules(index, [amsterdam, uva], min_support=2, window=3))

    def test_c_rules_simultaneous(self):
        """ Test that constants which only co-occur at the same timestamp give no c-rule. """
        quads = [Quadruple(0, 0, 10, 1), Quadruple(0, 1, 11, 1), Quadruple(1, 0, 10, 2), Quadruple(1, 1, 11, 2)]
        self.assertEqual([], enumerate_c_rules(build_index(quads), [10, 11], min_support=1, window=50))


class StaticConfidenceTest(unittest.TestCase):
    """ Tests for z- and f-rule confidences. """

    def test_z_confidences(self):
        """ Test z-rule confidences of a hand-counted example. """
        index = build_index([Quadruple(0, 0, 10, 1), Quadruple(1, 0, 10, 2), Quadruple(0, 0, 11, 3)])
        rules = {rule.head_constant: rule for rule in compute_z_confidences(index, 0)}
        self.assertAlmostEqual(2 / 3, rules[10].static_conf)
        self.assertAlmostEqual(1 / 3, rules[11].static_conf)
        rules = {rule.head_constant: rule for rule in compute_z_confidences(index, 3)}
        self.assertAlmostEqual(2 / 6, rules[10].static_conf)
        self.assertEqual((3, 2), (rules[10].support, rules[10].positives))

    def test_f_confidences(self):
        """ Test f-rule confidences of a hand-counted example. """
        kim, pizza, salad, eats = 0, 10, 11, 0
        index = build_index([Quadruple(kim, eats, pizza, 1), Quadruple(kim, eats, pizza, 2),
                             Quadruple(kim, eats, salad, 3), Quadruple(1, eats, salad, 3)])
        rules = {(rule.subject_constant, rule.head_constant): rule for rule in compute_f_confidences(index, 0)}
        self.assertAlmostEqual(2 / 3, rules[(kim, pizza)].static_conf)
        self.assertEqual(1.0, rules[(1, salad)].static_conf)
        rules = {(rule.subject_constant, rule.head_constant): rule for rule in compute_f_confidences(index, 10)}
        self.assertAlmostEqual(1 / 11, rules[(1, salad)].static_conf)

    def test_brute_force(self):
        """ Test that z- and f-rule confidences equal a recount on random graphs. """
        for seed in range(10):
            quads, _ = random_graph(seed, num_facts=250)
            index = build_index(quads)
            for smoothing in (0, 10):
                expected = brute_force_z(quads, smoothing)
                rules = compute_z_confidences(index, smoothing)
                self.assertEqual(len(expected), len(rules))
                for rule in rules:
                    confidence, support, positives = expected[(rule.head_relation, rule.head_constant)]
                    self.assertEqual(confidence, rule.static_conf)
                    self.assertEqual((support, positives), (rule.support, rule.positives))
                    self.assertTrue(0 < rule.static_conf <= 1)

                expected = brute_force_f(quads, smoothing)
                rules = compute_f_confidences(index, smoothing)
                self.assertEqual(expected, {(rule.head_relation, rule.subject_constant, rule.head_constant):
                                            rule.static_conf for rule in rules})
                if smoothing:
                    self.assertTrue(all(rule.static_conf < 1 for rule in rules))

    def test_f_independent_of_other_subjects(self):
        """ Test that adding facts of another subject does not change an f-rule confidence. """
        base = [Quadruple(0, 0, 1, 1), Quadruple(0, 0, 2, 2)]
        before = compute_f_confidences(build_index(base), 1)
        after = compute_f_confidences(build_index(base + [Quadruple(5, 0, 1, 3)]), 1)
        self.assertEqual([rule.static_conf for rule in before],
                         [rule.static_conf for rule in after if rule.subject_constant == 0])


def one_rule_of_each_type():
    """ Return one rule of each type, in canonical order. """
    model = ConfidenceModel(0.44, 0.3, 0.1, 1.5, 0.02, 0.05, window=50)
    return [Rule(RuleType.xy, 0, 1, model=model, static_conf=0.25, support=40, positives=10),
            Rule(RuleType.c, 1, 0, (3, 4), model=ConfidenceModel(1 / 3, 2 / 7, 0.0), static_conf=0.1,
                 support=7, positives=1),
            Rule(RuleType.z, 2, None, (5,), static_conf=0.2, support=10, positives=2),
            Rule(RuleType.f, 3, None, (6, 7), static_conf=1 / 11, support=1, positives=1)]


class RuleTest(unittest.TestCase):
    """ Tests for Rule, rule selections and ordering. """

    def test_render(self):
        """ Test rendering rules with names, including inverse relations. """
        vocabulary = Vocabulary(['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'], ['Consult', 'Visit'])
        rules = one_rule_of_each_type()
        self.assertEqual('Consult(x,y,t*) <- Visit(x,y,t)', rules[0].render(vocabulary))
        self.assertEqual('Visit(x,d,t*) <- Consult(x,e,t)', rules[1].render(vocabulary))
        self.assertEqual('Consult^-1(x,f,t) <- exists z Consult^-1(x,z,t)', rules[2].render(vocabulary))
        self.assertEqual('Visit^-1(g,h,t) <- exists z Visit^-1(g,z,t)', rules[3].render(vocabulary))
        self.assertEqual('0(x,y,t*) <- 1(x,y,t)', rules[0].render())

    def test_recurrent(self):
        """ Test that only xy-rules with equal head and body are recurrent. """
        self.assertTrue(Rule(RuleType.xy, 2, 2).recurrent)
        self.assertFalse(Rule(RuleType.xy, 2, 3).recurrent)
        self.assertFalse(Rule(RuleType.c, 2, 2, (1, 1)).recurrent)

    def test_sort_rejects_duplicates(self):
        """ Test that rules are sorted by type then symbols, and duplicates are rejected. """
        rules = one_rule_of_each_type()
        self.assertEqual(rules, sort_rules(list(reversed(rules))))
        with self.assertRaises(ValueError):
            sort_rules(rules + [Rule(RuleType.z, 2, None, (5,))])

    def test_select_rules(self):
        """ Test rule type selections. """
        rules = one_rule_of_each_type() + [Rule(RuleType.xy, 1, 1)]
        self.assertEqual(5, len(select_rules(rules, 'all')))
        self.assertEqual([], select_rules(rules, 'none'))
        self.assertEqual([rules[4]], select_rules(rules, 'rec'))
        self.assertEqual([rules[0], rules[4]], select_rules(rules, 'xy'))
        self.assertEqual([rules[1], rules[2], rules[3]], select_rules(rules, 'all-xy'))
        self.assertEqual([rules[2], rules[3]], select_rules(rules, 'z,f'))
        with self.assertRaises(ValueError):
            select_rules(rules, 'all-q')
        with self.assertRaises(ValueError):
            select_rules(rules, 'xy,q')


class RuleFileTest(unittest.TestCase):
    """ Tests for serialize_rules() and parse_rules(). """

    def test_round_trip(self):
        """ Test that rules and metadata survive a round trip at full precision. """
        rules = one_rule_of_each_type()
        stream = io.StringIO()
        serialize_rules(rules, stream, {'num_entities': 8, 'num_relations': 2})
        self.assertEqual(5, len(stream.getvalue().splitlines()))

        parsed = parse_rules(io.StringIO(stream.getvalue()))
        self.assertEqual(rules, list(parsed))
        self.assertEqual({'num_entities': 8, 'num_relations': 2}, parsed.metadata)
        self.assertEqual(1 / 3, parsed[1].model.alpha)

    def test_empty(self):
        """ Test that an empty rule set is a header-only file. """
        stream = io.StringIO()
        serialize_rules([], stream)
        self.assertEqual(1, len(stream.getvalue().splitlines()))
        self.assertEqual([], list(parse_rules(io.StringIO(stream.getvalue()))))

    def test_errors(self):
        """ Test that foreign, mismatched, malformed, duplicated and truncated files are rejected. """
        stream = io.StringIO()
        serialize_rules(one_rule_of_each_type(), stream)
        lines = stream.getvalue().splitlines(keepends=True)

        with self.assertRaisesRegex(RuleFileError, 'line 1'):
            parse_rules(io.StringIO('{"format": "other"}\n'))
        with self.assertRaisesRegex(RuleFileError, 'version'):
            parse_rules(io.StringIO(lines[0].replace('"version": 1', '"version": 2')))
        with self.assertRaisesRegex(RuleFileError, 'line 3'):
            parse_rules(io.StringIO(''.join(lines[:2] + ['{"type": "q"}\n'] + lines[3:])))
        with self.assertRaisesRegex(RuleFileError, 'duplicate'):
            parse_rules(io.StringIO(''.join(lines[:2] + [lines[1]] + lines[3:])))
        with self.assertRaisesRegex(RuleFileError, 'truncated'):
            parse_rules(io.StringIO(''.join(lines[:3])))
