""" Learn the confidence functions of xy- and c-rules from the training graph.

For each candidate rule this collects examples (min(Δ), |Δ_W|, label): for every training
timestamp t and subject c with some head fact h(c, z, t), and every prediction d the rule body
makes for c at t (a grounding strictly before t), label says whether h(c, d, t) is true.

Examples are bucketed and turned into smoothed observed confidences, positives / (count + P),
per min(Δ) for fitting f and per (min(Δ), |Δ_W|) for fitting g. The fit is done in two steps
with bounded least squares: first alpha, lam and phi of f with g assumed zero, then rho, kappa
and gamma of g with f fixed. Squared errors are weighted by bucket counts, which is the same
as summing over individual examples.
"""

import csv
import logging
import os

from collections import Counter, namedtuple
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from scipy.optimize import least_squares

from pytkg.confidence import ConfidenceModel, frequency_curve, recency_curve
from pytkg.rules import (Rule, RuleSet, RuleType, compute_f_confidences, compute_z_confidences,
                         enumerate_c_rules, enumerate_xy_rules, frequent_constants, sort_rules)

# Parameter bounds: (alpha, lam, phi) and (rho, kappa, gamma)
RECENCY_BOUNDS = (np.array([0.0, 0.0, 0.0]), np.array([1.0, 16.0, 10.0]))
FREQUENCY_BOUNDS = (np.array([-10.0, -1.0, 0.0]), np.array([10.0, 1.0, 1.0]))

RecencyFit = namedtuple('RecencyFit', 'alpha lam phi sse converged')
FrequencyFit = namedtuple('FrequencyFit', 'rho kappa gamma sse converged')

RecencyTargets = namedtuple('RecencyTargets', 'min_delta target weight')
FrequencyTargets = namedtuple('FrequencyTargets', 'min_delta count target weight')


class ExampleSet:
    """ The examples of one rule, stored as counts of (min(Δ), |Δ_W|, label). """

    def __init__(self, window):
        self.window = window
        self.counts = Counter()

    def add(self, min_delta, frequency, label, count=1):
        """ Add count examples with the given features and label (truthy for positive). """
        assert min_delta >= 1 and 0 <= frequency <= self.window, (min_delta, frequency)
        self.counts[(min_delta, frequency, 1 if label else 0)] += count

    def examples(self):
        """ Return all examples as a sorted list of (min(Δ), |Δ_W|, label) tuples. """
        return [key for key in sorted(self.counts) for _ in range(self.counts[key])]

    @property
    def positives(self):
        """ Number of positive examples. """
        return sum(count for (_, _, label), count in self.counts.items() if label)

    def by_recency(self):
        """ Return a dict from min(Δ) to (count, positives). """
        return self._bucket(lambda min_delta, frequency: min_delta)

    def by_recency_frequency(self):
        """ Return a dict from (min(Δ), |Δ_W|) to (count, positives). """
        return self._bucket(lambda min_delta, frequency: (min_delta, frequency))

    def _bucket(self, key_fn):
        buckets = {}
        for (min_delta, frequency, label), count in sorted(self.counts.items()):
            key = key_fn(min_delta, frequency)
            total, positives = buckets.get(key, (0, 0))
            buckets[key] = (total + count, positives + (count if label else 0))
        return buckets

    def __len__(self):
        """ Number of items. """
        return sum(self.counts.values())

    def __repr__(self):
        """ Nicer repr. """
        return f"<{self.__class__.__name__} {len(self)} examples, {self.positives} positive>"


class TargetTable:
    """ Smoothed observed confidences of an ExampleSet, bucketed for the two fitting steps. """

    def __init__(self, recency, frequency, overall, window):
        self.recency = recency
        self.frequency = frequency
        self.overall = overall
        self.window = window

    def recency_target(self, min_delta):
        """ Return the target for a min(Δ) bucket, or None if the bucket is empty. """
        matches = np.flatnonzero(self.recency.min_delta == min_delta)
        return float(self.recency.target[matches[0]]) if len(matches) else None


def collect_examples(index, rule, window):
    """ Collect the examples of an xy- or c-rule from a (training) index.

    Only predictions made by the rule body produce examples: a pair (c, d) without any body
    grounding before t has no min(Δ), so it cannot inform the confidence function.
    """
    examples = ExampleSet(window)
    head, body = rule.head_relation, rule.body_relation

    for subject in index.subjects(head):
        head_events = index.events(head, subject)
        if rule.rule_type is RuleType.xy:
            candidates = [(obj, obj) for obj in index.objects(body, subject)]
        elif rule.rule_type is RuleType.c:
            head_constant, body_constant = rule.constants
            if not index.timestamps(body, subject, body_constant):
                continue
            candidates = [(body_constant, head_constant)]
        else:
            raise ValueError(f"Only xy- and c-rules have examples, not {rule}")

        for t, true_objects in head_events.items():
            for body_obj, prediction in candidates:
                timestamps = index.timestamps_before(body, subject, body_obj, t, window)
                if timestamps:
                    min_delta = t - timestamps[-1]
                    frequency = sum(1 for timestamp in timestamps if t - timestamp <= window)
                    examples.add(min_delta, frequency, prediction in true_objects)

    return examples


def transform_observed(examples, smoothing):
    """ Return the TargetTable of an ExampleSet: positives / (count + smoothing) per bucket.

    Buckets are keyed by min(Δ) for the recency step and by (min(Δ), |Δ_W|) for the frequency
    step, weighted by their example counts. Empty buckets have no entry.
    """
    recency = examples.by_recency()
    keys = sorted(recency)
    recency_targets = RecencyTargets(
        np.array(keys, dtype=float),
        np.array([recency[key][1] / (recency[key][0] + smoothing) for key in keys], dtype=float),
        np.array([recency[key][0] for key in keys], dtype=float))

    frequency = examples.by_recency_frequency()
    keys = sorted(frequency)
    frequency_targets = FrequencyTargets(
        np.array([key[0] for key in keys], dtype=float),
        np.array([key[1] for key in keys], dtype=float),
        np.array([frequency[key][1] / (frequency[key][0] + smoothing) for key in keys], dtype=float),
        np.array([frequency[key][0] for key in keys], dtype=float))

    total = len(examples)
    overall = examples.positives / (total + smoothing) if total + smoothing > 0 else 0.0
    return TargetTable(recency_targets, frequency_targets, overall, examples.window)


def _best_least_squares(residuals, starts, bounds):
    """ Run bounded least squares from each start, and return (sse, x) of the best, or None. """
    lower, upper = bounds
    best = None
    for start in starts:
        start = np.clip(np.asarray(start, dtype=float), lower, upper)
        try:
            result = least_squares(residuals, start, bounds=bounds, method='trf',
                                   xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=2000)
        except (ValueError, np.linalg.LinAlgError) as exc:
            logging.debug(f"Least squares failed from {start}: {exc}")
            continue
        if not np.all(np.isfinite(result.x)) or not np.isfinite(result.cost):
            continue
        sse = 2.0 * result.cost
        if best is None or sse < best[0]:
            best = (sse, result.x)
    return best


def _random_starts(count, seed, low, high):
    rng = np.random.default_rng(seed)
    return [rng.uniform(low, high) for _ in range(count)]


def fit_recency(targets, extra_starts=0, seed=0):
    """ Fit (alpha, lam, phi) of f to the recency targets of a TargetTable, assuming g = 0.

    Starts from alpha = target at min(Δ) = 1 with lam in {0.1, 1} and phi in {0, 0.2}, plus
    extra_starts random starts drawn with the seed. If every start fails, falls back to the
    static estimate (overall target, 0, 0) with converged False.
    """
    recency = targets.recency
    if len(recency.min_delta) == 0:
        return RecencyFit(targets.overall, 0.0, 0.0, 0.0, False)

    sqrt_weight = np.sqrt(recency.weight)

    def residuals(params):
        return sqrt_weight * (recency_curve(recency.min_delta, *params) - recency.target)

    alpha_0 = targets.recency_target(1)
    if alpha_0 is None:
        alpha_0 = float(recency.target[0])
    starts = [(alpha_0, lam_0, phi_0) for lam_0 in (0.1, 1.0) for phi_0 in (0.0, 0.2)]
    starts += _random_starts(extra_starts, seed, [0.0, 0.0, 0.0], [1.0, 4.0, 1.0])

    best = _best_least_squares(residuals, starts, RECENCY_BOUNDS)
    if best is None:
        logging.debug("Recency fit failed, falling back to the static estimate")
        return RecencyFit(targets.overall, 0.0, 0.0, float('nan'), False)
    sse, (alpha, lam, phi) = best
    return RecencyFit(float(alpha), float(lam), float(phi), float(sse), True)


def fit_frequency(targets, alpha, lam, phi, extra_starts=0, seed=0):
    """ Fit (rho, kappa, gamma) of g to the frequency targets of a TargetTable, with f fixed.

    If every start fails, falls back to g = 0, i.e. (0, 0, 0) with converged False.
    """
    frequency = targets.frequency
    if len(frequency.min_delta) == 0:
        return FrequencyFit(0.0, 0.0, 0.0, 0.0, False)

    sqrt_weight = np.sqrt(frequency.weight)
    recency = recency_curve(frequency.min_delta, alpha, lam, phi)

    def residuals(params):
        g = frequency_curve(frequency.min_delta, frequency.count, targets.window, *params)
        return sqrt_weight * (recency + g - frequency.target)

    starts = [(0.0, 0.0, 0.0)]
    starts += [(rho_0, 0.0, gamma_0) for rho_0 in (-5.0, -1.0, 0.0, 1.0, 5.0) for gamma_0 in (0.05, 0.2)]
    starts += _random_starts(extra_starts, seed + 1, [-1.0, -0.1, 0.0], [5.0, 0.1, 0.5])

    best = _best_least_squares(residuals, starts, FREQUENCY_BOUNDS)
    if best is None:
        logging.debug("Frequency fit failed, falling back to g = 0")
        return FrequencyFit(0.0, 0.0, 0.0, float('nan'), False)
    sse, (rho, kappa, gamma) = best
    return FrequencyFit(float(rho), float(kappa), float(gamma), float(sse), True)


def fit_model(targets, extra_starts=0, seed=0):
    """ Run both fitting steps and return a ConfidenceModel. """
    recency = fit_recency(targets, extra_starts, seed)
    frequency = fit_frequency(targets, recency.alpha, recency.lam, recency.phi, extra_starts, seed)
    return ConfidenceModel(recency.alpha, recency.lam, recency.phi,
                           frequency.rho, frequency.kappa, frequency.gamma,
                           window=targets.window,
                           converged=recency.converged and frequency.converged)


def _diagnostics_filename(rule):
    parts = [rule.rule_type.value, str(rule.head_relation), str(rule.body_relation)]
    parts += [str(constant) for constant in rule.constants]
    return 'rule_' + '_'.join(parts) + '.csv'


def write_diagnostics(rule, targets, model, directory):
    """ Write the bucketed targets and fitted curves of a rule as CSV, for plotting elsewhere.

    Rows of section 'recency' hold (min(Δ), target, f, count); rows of section 'frequency'
    hold (min(Δ), |Δ_W| / W, target - f, g, count).
    """
    path = os.path.join(directory, _diagnostics_filename(rule))
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['section', 'min_delta', 'frequency_ratio', 'target', 'fitted', 'count'])
        recency = targets.recency
        for min_delta, target, weight in zip(recency.min_delta, recency.target, recency.weight):
            writer.writerow(['recency', int(min_delta), '', repr(float(target)),
                             repr(model.recency(min_delta)), int(weight)])
        frequency = targets.frequency
        for min_delta, count, target, weight in zip(frequency.min_delta, frequency.count,
                                                    frequency.target, frequency.weight):
            residual = float(target) - model.recency(min_delta)
            writer.writerow(['frequency', int(min_delta), repr(float(count) / model.window),
                             repr(residual), repr(model.frequency(min_delta, count)), int(weight)])
    return path


def fit_rule(index, rule, config, diagnostics_dir=None):
    """ Collect examples for a candidate rule and fit its confidence function.

    Returns a new Rule with its model, static confidence and support statistics, or None if the
    rule has no examples or its peak confidence is below the configured floor.
    """
    examples = collect_examples(index, rule, config.window)
    if not examples:
        return None
    targets = transform_observed(examples, config.psmooth)
    model = fit_model(targets, config.extra_starts, config.seed)
    if not model.converged:
        logging.debug(f"Confidence fit of {rule} fell back to a default estimate")
    if diagnostics_dir is not None:
        write_diagnostics(rule, targets, model, diagnostics_dir)
    if model.peak() < config.floor:
        return None
    return Rule(rule.rule_type, rule.head_relation, rule.body_relation, rule.constants,
                model=model, static_conf=targets.overall,
                support=len(examples), positives=examples.positives)


_worker_state = {}


def _init_worker(index, config, diagnostics_dir):
    _worker_state.update(index=index, config=config, diagnostics_dir=diagnostics_dir)


def _fit_in_worker(rule):
    return fit_rule(_worker_state['index'], rule, _worker_state['config'],
                    _worker_state['diagnostics_dir'])


def fit_rules(index, candidates, config, diagnostics_dir=None):
    """ Fit all candidate rules, in parallel if config.threads > 1, preserving their order. """
    if config.threads > 1 and len(candidates) > 1:
        chunksize = max(1, len(candidates) // (config.threads * 16))
        with ProcessPoolExecutor(max_workers=config.threads, initializer=_init_worker,
                                 initargs=(index, config, diagnostics_dir)) as executor:
            results = executor.map(_fit_in_worker, candidates, chunksize=chunksize)
            fitted = []
            for i, result in enumerate(results, start=1):
                fitted.append(result)
                if i % 1000 == 0:
                    logging.info(f"Fitted {i} of {len(candidates)} candidate rules")
            return fitted

    fitted = []
    for i, rule in enumerate(candidates, start=1):
        fitted.append(fit_rule(index, rule, config, diagnostics_dir))
        if i % 1000 == 0:
            logging.info(f"Fitted {i} of {len(candidates)} candidate rules")
    return fitted


def learn_rules(index, config, diagnostics_dir=None):
    """ Learn a complete RuleSet from a training index.

    Enumerates xy- and c-rule candidates, fits their confidence functions, and adds z- and
    f-rules with static confidences. Rules whose peak confidence is below config.floor are
    dropped. The result is in canonical order, independently of config.threads.
    """
    config.validate()
    candidates = enumerate_xy_rules(index, config.min_support)
    constants = frequent_constants(index, config.top_constants)
    candidates += enumerate_c_rules(index, constants, config.min_support, config.window)
    logging.info(f"Fitting confidence functions of {len(candidates)} candidate rules")

    rules = [rule for rule in fit_rules(index, candidates, config, diagnostics_dir) if rule is not None]
    logging.info(f"Kept {len(rules)} of {len(candidates)} xy- and c-rules")

    static_rules = compute_z_confidences(index, config.psmooth) + compute_f_confidences(index, config.psmooth)
    rules += [rule for rule in static_rules if rule.static_conf >= config.floor]

    ruleset = RuleSet(sort_rules(rules))
    logging.info("Learned rules: " + ", ".join(f"{name}={count}" for name, count in ruleset.counts().items()))
    return ruleset
