#!/usr/bin/env python3
# coding=utf-8

import pytest

from spikecrown.ground_state import shoot
from spikecrown.nonlinearity import Nonlinearity


@pytest.fixture(scope="session")
def cubic_plane():
    """
    Ground state of w'' + w'/r - w + w^2 = 0.
    """
    return shoot(Nonlinearity(3, 2))


@pytest.fixture(scope="session")
def quartic_plane():
    """
    Ground state of w'' + w'/r - w + w^3 = 0.
    """
    return shoot(Nonlinearity(4, 2))
