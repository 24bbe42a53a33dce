#!/usr/bin/env python3
# coding=utf-8

"""
errors.py
Purpose: Exception roots shared by every stage. The CLI maps each family
to an exit code.
"""


class CrownError(Exception):
    """
    Base class for everything the toolkit raises on purpose.
    """

    exit_code = 3

    def to_data(self):
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class CriterionFailure(CrownError):
    exit_code = 1


class ConfigError(CrownError):
    exit_code = 2


class NumericalError(CrownError):
    exit_code = 3


class DomainError(ConfigError, ValueError):
    """
    Argument outside the domain of a function (non-finite, negative radius...).
    """
    pass


class PropertyViolationError(NumericalError):
    """
    A sampled property check found a counterexample.
    """

    def __init__(self, message, worst=None):
        super().__init__(message)
        self.worst = worst
