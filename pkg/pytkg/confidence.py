""" Temporal confidence functions of xy- and c-rules.

The confidence of a rule for a prediction is computed from the rule's Δ set (the distances from
every body grounding to the prediction time) as conf = clamp(f + g, 0, 1), where

    f = alpha / (1 + phi) * (2 ** (-lam * (min(Δ) - 1)) + phi)
    g = clip(rho * |Δ_W| / W + kappa / min(Δ), -gamma, gamma)

f models the recency of the latest body grounding: it equals alpha when min(Δ) = 1 and decays
at rate lam towards alpha * phi / (1 + phi). g adds a correction for the frequency of body
groundings within the window W, bounded by gamma.
"""

import math

from dataclasses import asdict, dataclass

import numpy as np

# Confidence variants: recency and frequency (default), recency only, frequency only, and the
# static confidence stored with every rule.
CONF_VARIANTS = ('f+g', 'f', 'g', 'static')


def recency_curve(min_delta, alpha, lam, phi):
    """ Vectorised f over an array of min(Δ) values. """
    min_delta = np.asarray(min_delta, dtype=float)
    return alpha / (1.0 + phi) * (np.exp2(-lam * (min_delta - 1.0)) + phi)


def frequency_curve(min_delta, count, window, rho, kappa, gamma):
    """ Vectorised g over arrays of min(Δ) and |Δ_W| values. """
    min_delta = np.asarray(min_delta, dtype=float)
    count = np.asarray(count, dtype=float)
    return np.clip(rho * count / window + kappa / min_delta, -gamma, gamma)


@dataclass
class ConfidenceModel:
    """ Learned parameters of one rule's confidence function. """

    alpha: float
    lam: float
    phi: float
    rho: float = 0.0
    kappa: float = 0.0
    gamma: float = 0.0
    window: int = 50
    # False if either fitting step fell back to its default estimate
    converged: bool = True

    def recency(self, min_delta):
        """ Return f for a given min(Δ). """
        return self.alpha / (1.0 + self.phi) * (2.0 ** (-self.lam * (min_delta - 1)) + self.phi)

    def frequency(self, min_delta, count):
        """ Return g for a given min(Δ) and |Δ_W|. """
        value = self.rho * count / self.window + self.kappa / min_delta
        return min(max(value, -self.gamma), self.gamma)

    def components(self, delta_set):
        """ Return (f, g) for a non-empty DeltaSet. """
        if not delta_set:
            raise ValueError("Cannot compute a confidence from an empty DeltaSet")
        min_delta = delta_set.min
        return self.recency(min_delta), self.frequency(min_delta, delta_set.count_within(self.window))

    def confidence(self, delta_set, variant='f+g'):
        """ Return the clamped confidence for a non-empty DeltaSet, using f, g or both. """
        f, g = self.components(delta_set)
        if variant == 'f':
            g = 0.0
        elif variant == 'g':
            f = 0.0
        elif variant != 'f+g':
            raise ValueError(f"Unsupported confidence variant for a learned model: {variant!r}")
        return min(max(f + g, 0.0), 1.0)

    def peak(self):
        """ Upper bound of the confidence over all Δ sets, f(1) + max(0, gamma). """
        return self.alpha + max(0.0, self.gamma)

    def asymptote(self):
        """ Limit of f as min(Δ) grows without bound. """
        return self.alpha * self.phi / (1.0 + self.phi)

    def to_dict(self):
        """ Return the parameters as a JSON-compatible dict. """
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        """ Inverse of to_dict(). """
        model = cls(**values)
        for name in ('alpha', 'lam', 'phi', 'rho', 'kappa', 'gamma'):
            if not math.isfinite(getattr(model, name)):
                raise ValueError(f"Parameter {name} is not finite: {getattr(model, name)}")
        return model


def eval_confidence(model, delta_set, variant='f+g'):
    """ Return clamp(f + g, 0, 1) of a model for a non-empty DeltaSet. """
    return model.confidence(delta_set, variant)
