"""Shared pytest configuration.

The acceptance checks in ``test_acceptance.py`` run in a fast profile by
default (2,000 replications, 999 permutations per test; a few minutes on one
core).  Pass ``--acceptance-full`` for the full protocol (10,000 x 10,000;
expect hours).  Run with ``-s`` to see the one-line PASS/FAIL report every
check prints.
"""
import dataclasses

import pytest


@dataclasses.dataclass(frozen=True)
class AcceptanceProfile:
    full: bool
    replications: int        # power rows and the nonlinear comparison
    permutations: int
    level_replications: int  # null-rejection rates need tighter MC error
    ate_replications: int    # sample-ATE calibration


FAST = AcceptanceProfile(
    full=False,
    replications=2_000,
    permutations=999,
    level_replications=6_000,
    ate_replications=2_000,
)
FULL = AcceptanceProfile(
    full=True,
    replications=10_000,
    permutations=10_000,
    level_replications=10_000,
    ate_replications=10_000,
)


def pytest_addoption(parser):
    parser.addoption(
        "--acceptance-full",
        action="store_true",
        default=False,
        help="run acceptance checks at full scale (10,000 x 10,000)",
    )


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: end-to-end capability checks (slower)"
    )


@pytest.fixture(scope="session")
def profile(request):
    return FULL if request.config.getoption("--acceptance-full") else FAST
