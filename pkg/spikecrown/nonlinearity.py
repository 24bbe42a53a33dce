#!/usr/bin/env python3
# coding=utf-8

import logging
from dataclasses import dataclass, field

import numpy as np

from spikecrown.errors import ConfigError, DomainError

log = logging.getLogger(__name__)


class NonlinearityError(ConfigError):
    pass


class OddNonlinearity:
    """
    Odd, superlinear nonlinearity f with antiderivative F and derivative f'.
    Subclasses provide the three scalar laws; the module level eval_*
    functions check their arguments and dispatch here.
    """

    def f(self, t):
        raise NotImplementedError

    def F(self, t):
        raise NotImplementedError

    def fprime(self, t):
        raise NotImplementedError


@dataclass(frozen=True)
class Nonlinearity(OddNonlinearity):
    """
    The power family f(t) = |t|^(p-2) t.

    dimension_n only enters the subcritical bound p < 2N/(N-2) for N >= 3.
    Set strict=False to build an out-of-range instance for reporting.
    """

    p: float
    dimension_n: int = 2
    strict: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.strict:
            problem = growth_problem(self.p, self.dimension_n)
            if problem:
                raise NonlinearityError(problem)

    @property
    def critical_exponent(self):
        if self.dimension_n >= 3:
            return 2.0 * self.dimension_n / (self.dimension_n - 2)
        return np.inf

    def f(self, t):
        return np.abs(t) ** (self.p - 2) * t

    def F(self, t):
        return np.abs(t) ** self.p / self.p

    def fprime(self, t):
        return (self.p - 1) * np.abs(t) ** (self.p - 2)


def growth_problem(p, dimension_n):
    if not np.isfinite(p) or p <= 2:
        return "growth exponent p={} must exceed 2".format(p)
    if int(dimension_n) != dimension_n or dimension_n < 1:
        return "dimension N={} must be a positive integer".format(dimension_n)
    if dimension_n >= 3 and p >= 2.0 * dimension_n / (dimension_n - 2):
        return "p={} is not subcritical in dimension N={}".format(p, dimension_n)
    return None


def _checked(t):
    values = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError("nonlinearity evaluated at a non-finite argument")
    return values


def _unwrap(t, values):
    if np.ndim(t) == 0:
        return float(values)
    return values


def eval_f(nl, t):
    return _unwrap(t, nl.f(_checked(t)))


def eval_F(nl, t):
    return _unwrap(t, nl.F(_checked(t)))


def eval_fprime(nl, t):
    return _unwrap(t, nl.fprime(_checked(t)))


@dataclass
class HypothesisReport:
    p: float
    dimension_n: int
    checks: dict

    @property
    def passed(self):
        return all(self.checks.values())

    def failures(self):
        return [name for name, ok in self.checks.items() if not ok]

    def to_data(self):
        return {"p": self.p, "dimension_n": self.dimension_n, "checks": dict(self.checks),
                "passed": self.passed}


def validate_hypotheses(nl, t_max=10.0, samples=2001):
    """
    Sample f on a symmetric grid and check oddness, f(0) = f'(0) = 0,
    monotone growth on t > 0 and the admissible exponent range.
    """
    t = np.linspace(-t_max, t_max, samples)
    positive = t[t > 0]

    with np.errstate(divide="ignore", invalid="ignore"):
        ft = nl.f(t)
        f_neg = nl.f(-t)
        f0 = nl.f(np.float64(0.0))
        fp0 = nl.fprime(np.float64(0.0))
        growth = nl.f(positive)
        ratio = growth / positive

    checks = {
        "growth-exponent": growth_problem(nl.p, nl.dimension_n) is None,
        "odd": bool(np.all(f_neg == -ft)),
        "vanishing-at-zero": bool(f0 == 0.0 and fp0 == 0.0),
        "monotone": bool(np.all(np.diff(growth) > 0)),
        "superlinear": bool(np.all(np.isfinite(ratio)) and np.all(np.diff(ratio) > 0)),
    }

    report = HypothesisReport(nl.p, nl.dimension_n, checks)
    if not report.passed:
        log.warning("nonlinearity p={} fails {}".format(nl.p, report.failures()))
    return report
