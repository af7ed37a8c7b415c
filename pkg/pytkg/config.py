""" Hyperparameters and paths shared by the learn, eval, predict, explain and ablate commands.

Values come from built-in defaults, optionally overridden by a configuration file of simple
"key = value" lines, optionally overridden again by command-line flags. Keys are the long flag
names, with either dashes or underscores, e.g.

    # ICEWS14 settings
    window = 50
    psmooth = 10
    top-h = 5
"""

import configparser
import dataclasses

from dataclasses import dataclass
from typing import Optional

from pytkg.confidence import CONF_VARIANTS
from pytkg.rules import select_rules

TIE_POLICIES = ('average', 'best', 'worst')


@dataclass
class Config:
    """ All settings of a pipeline run. Field names match the command-line flags. """

    train: Optional[str] = None
    valid: Optional[str] = None
    test: Optional[str] = None
    rules: Optional[str] = None
    out: Optional[str] = None
    names: bool = False
    raw_timestamps: bool = False
    window: int = 50
    psmooth: float = 10.0
    top_h: int = 5
    decay: float = 0.9
    top_constants: int = 100
    min_support: int = 5
    floor: float = 0.001
    tie_policy: str = 'average'
    threads: int = 1
    seed: int = 0
    extra_starts: int = 0
    split: str = 'test'
    train_only: bool = False
    rule_types: str = 'all'
    conf_variant: str = 'f+g'
    top_k: int = 10

    def validate(self):
        """ Raise ValueError if any setting is outside its domain. Returns self. """
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.psmooth < 0:
            raise ValueError(f"psmooth must be >= 0, got {self.psmooth}")
        if self.top_h < 1:
            raise ValueError(f"top-h must be >= 1, got {self.top_h}")
        if not 0 <= self.decay <= 1:
            raise ValueError(f"decay must be in [0, 1], got {self.decay}")
        if self.top_constants < 0:
            raise ValueError(f"top-constants must be >= 0, got {self.top_constants}")
        if self.min_support < 1:
            raise ValueError(f"min-support must be >= 1, got {self.min_support}")
        if self.floor < 0:
            raise ValueError(f"floor must be >= 0, got {self.floor}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.extra_starts < 0:
            raise ValueError(f"extra-starts must be >= 0, got {self.extra_starts}")
        if self.top_k < 1:
            raise ValueError(f"top-k must be >= 1, got {self.top_k}")
        if self.tie_policy not in TIE_POLICIES:
            raise ValueError(f"tie-policy must be one of {TIE_POLICIES}, got {self.tie_policy!r}")
        if self.conf_variant not in CONF_VARIANTS:
            raise ValueError(f"conf-variant must be one of {CONF_VARIANTS}, got {self.conf_variant!r}")
        if self.split not in ('valid', 'test'):
            raise ValueError(f"split must be 'valid' or 'test', got {self.split!r}")
        # Raises ValueError for unknown selections
        select_rules([], self.rule_types)
        return self

    def as_dict(self):
        """ Return all settings as a JSON-compatible dict, for echoing in reports. """
        return dataclasses.asdict(self)

    def merged(self, overrides):
        """ Return a copy with the non-None values of a dict applied. """
        return dataclasses.replace(self, **{key: value for key, value in overrides.items()
                                            if value is not None})

    @classmethod
    def field_names(cls):
        """ Return the names of all settings. """
        return [field.name for field in dataclasses.fields(cls)]


def _convert(field, raw, parser):
    if field.type in (bool, 'bool'):
        if raw.lower() not in parser.BOOLEAN_STATES:
            raise ValueError(f"{field.name} must be a boolean, got {raw!r}")
        return parser.BOOLEAN_STATES[raw.lower()]
    if field.type in (int, 'int'):
        return int(raw)
    if field.type in (float, 'float'):
        return float(raw)
    return raw


def parse_config_text(text, base=None):
    """ Parse "key = value" lines and return a Config based on base (or the defaults). """
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=('#', ';'))
    parser.read_string('[pytkg]\n' + text)
    fields = {field.name: field for field in dataclasses.fields(Config)}

    values = {}
    for key, raw in parser['pytkg'].items():
        name = key.replace('-', '_')
        if name not in fields:
            raise ValueError(f"Unknown configuration key: {key!r}")
        values[name] = _convert(fields[name], raw.strip(), parser)

    return (base or Config()).merged(values)


def load_config(path, base=None):
    """ Read a configuration file. See parse_config_text(). """
    with open(path, encoding='utf-8') as f:
        return parse_config_text(f.read(), base)
