"""Shared fixtures: expensive solves and oracles are session-cached."""

import pytest

from gl4 import vortex

import oracles


@pytest.fixture(scope="session")
def profile_lam1():
    return vortex.solve_profile(1.0, r_max=20.0, nodes=4000)


@pytest.fixture(scope="session")
def profile_lam1_fine():
    return vortex.solve_profile(1.0, r_max=20.0, nodes=8000)


@pytest.fixture(scope="session")
def oracle_lam1():
    return oracles.shoot_profile(1.0)
