#!/usr/bin/env python3
# coding=utf-8

"""
config.py
Purpose: Job configuration. Reads YAML (or JSON, which YAML accepts),
validates every parameter before any computation starts, and hashes the
canonical form so results can be traced to the job that produced them.
"""

import os
import logging
from dataclasses import dataclass, field, fields

from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from spikecrown.errors import ConfigError
from spikecrown.export import payload_hash
from spikecrown.geometry import domain_from_data
from spikecrown.nonlinearity import Nonlinearity
from spikecrown.packing import MIN_CROWN
from spikecrown.reduced_energy import FORMS

log = logging.getLogger(__name__)

THREADS_ENV = "SPIKE_CROWN_THREADS"
MIN_DIVISOR = 5.0
MAX_H_FACTOR = 0.25


@dataclass
class JobConfig:
    domain: dict = None
    p: float = 3.0
    dimension: int = 2
    epsilons: list = None
    epsilon_divisors: list = None
    delta0: float = None
    k: int = None
    eta: float = None
    h_factor: float = MAX_H_FACTOR
    form: str = "leading"
    output_dir: str = "out"
    seed: int = 0
    samples: int = 10000
    continuation: bool = False
    psi_check: bool = False
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_data(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigError("job config must be a mapping, got {}".format(type(data).__name__))
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("unknown config keys: {}".format(", ".join(unknown)))
        return cls(base_dir=base_dir, **data)

    @classmethod
    def from_file(cls, path):
        yaml = YAML(typ="safe")
        try:
            with open(path, "r") as config_file:
                data = yaml.load(config_file)
        except OSError as error:
            raise ConfigError("cannot read config {}: {}".format(path, error))
        except YAMLError as error:
            raise ConfigError("cannot parse config {}: {}".format(path, error))
        log.debug("loaded job config from {}".format(path))
        return cls.from_data(data, os.path.dirname(os.path.abspath(path)))

    def to_data(self):
        data = {}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            value = getattr(self, f.name)
            if value is not None:
                data[f.name] = list(value) if isinstance(value, tuple) else value
        return data

    @property
    def config_hash(self):
        """
        SHA-256 of the canonical job data; where results go does not enter.
        """
        data = self.to_data()
        data.pop("output_dir", None)
        return payload_hash(data)

    # validation

    def validate(self):
        self.p = float(self.p)
        self.dimension = int(self.dimension)
        Nonlinearity(self.p, self.dimension)

        if self.form not in FORMS:
            raise ConfigError("form must be one of {}, got {!r}".format(FORMS, self.form))
        if not 0 < self.h_factor <= MAX_H_FACTOR:
            raise ConfigError("h_factor must lie in (0, {}], got {}".format(MAX_H_FACTOR, self.h_factor))
        if int(self.samples) < 1:
            raise ConfigError("samples must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

        if self.domain is None:
            # ground-state jobs
            return
        self.validate_domain()

    def validate_domain(self):
        if (self.epsilons is None) == (self.epsilon_divisors is None):
            raise ConfigError("give exactly one of epsilons and epsilon_divisors")
        if self.epsilons is not None:
            self.epsilons = [float(e) for e in self.epsilons]
            if not self.epsilons or any(not e > 0 for e in self.epsilons):
                raise ConfigError("epsilons must be a non-empty list of positive numbers")
            if self.delta0 is not None and max(self.epsilons) > self.delta0 / MIN_DIVISOR:
                raise ConfigError("eps={} exceeds delta0/5={:.6g}".format(max(self.epsilons),
                                                                         self.delta0 / MIN_DIVISOR))
        else:
            self.epsilon_divisors = [float(n) for n in self.epsilon_divisors]
            if not self.epsilon_divisors or any(n < MIN_DIVISOR for n in self.epsilon_divisors):
                raise ConfigError("epsilon divisors must be >= {} (eps <= delta/5)".format(MIN_DIVISOR))

        if self.delta0 is not None and not self.delta0 > 0:
            raise ConfigError("delta0 must be positive, got {}".format(self.delta0))
        if self.k is not None and (int(self.k) != self.k or self.k < MIN_CROWN or self.k % 2):
            raise ConfigError("k must be an even integer >= {}, got {}".format(MIN_CROWN, self.k))
        if self.k is None and self.delta0 is None:
            raise ConfigError("give k or delta0 to choose it")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError("eta must be positive, got {}".format(self.eta))
        if not isinstance(self.domain, dict):
            raise ConfigError("domain must be a mapping, got {!r}".format(self.domain))
        self.domain = dict(self.domain)
        self.build_domain()

    def build_domain(self):
        if self.domain is None:
            raise ConfigError("job config has no domain")
        return domain_from_data(self.domain, self.base_dir)

    def nonlinearity(self):
        return Nonlinearity(self.p, self.dimension)

    def epsilon_list(self, delta_star):
        """
        Concrete eps values for a packing distance, largest first; each must
        satisfy eps <= delta/5.
        """
        if self.epsilons is not None:
            values = sorted(self.epsilons, reverse=True)
        else:
            values = [delta_star / n for n in sorted(self.epsilon_divisors)]
        too_large = [e for e in values if e > delta_star / MIN_DIVISOR * (1 + 1e-12)]
        if too_large:
            raise ConfigError("eps={} exceeds delta*/5={:.6g}".format(too_large[0], delta_star / MIN_DIVISOR))
        return values

    def eta_for(self, delta_star):
        eta = self.eta if self.eta is not None else delta_star / 10.0
        if eta >= delta_star / 2.0:
            raise ConfigError("eta={} must be below delta*/2={:.6g}".format(eta, delta_star / 2.0))
        return eta


def worker_count(default=None):
    """
    Worker threads, capped by SPIKE_CROWN_THREADS when set.
    """
    count = default or os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            count = min(count, max(1, int(cap)))
        except ValueError:
            raise ConfigError("{} must be an integer, got {!r}".format(THREADS_ENV, cap))
    return count
