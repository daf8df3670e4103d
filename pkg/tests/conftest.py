import time
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epgpr import EpSearchConfig, Orbit, extract_training_set, group_paths, iterate, random5, trace_orbit

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# EPs of random5(seed), located with mpmath (40 digits, secant iteration on the
# closest-pair p of mpmath.eig) independently of the package's eigensolver.
RANDOM5_EPS = {
    1: 0.73940784150714001 + 0.78011110028177381j,
    2: -0.51838704110922473 + 0.044121342917506453j,
    3: -0.31520668626148729 + 1.1391205068111061j,
    4: -0.064788230858021658 + 1.4099372716530953j,
    5: 1.1421703905818513 - 0.29425553807719742j,
    42: -0.81123694114437326 + 0.73512529121337286j,
}

# (1 + sqrt5 + 5/3) exp(-sqrt5), evaluated with mpmath at 25 digits before the build
MATERN_AT_ONE_ORACLE = 0.5239941088318203105927133

# the first five seeds whose test orbit shows exactly one exchanging pair
RANDOM5_SEEDS = (1, 2, 3, 4, 5)

# test orbit: radius 0.3, center displaced from the EP by 0.3 * (0.2 + 0.1i)
RANDOM5_RADIUS = 0.3
RANDOM5_OFFSET = 0.2 + 0.1j


def random5_orbit(seed, n_points=100):
    ep = RANDOM5_EPS[seed]
    return Orbit(ep + RANDOM5_OFFSET * RANDOM5_RADIUS, RANDOM5_RADIUS, n_points)


def random5_training(seed, subsample=20):
    family = random5(seed)
    report = group_paths(trace_orbit(family, random5_orbit(seed)))
    return family, report, extract_training_set(report, 0, subsample)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


@pytest.fixture(scope="session")
def random5_runs():
    """``{(seed, exploration_after): (family, training, EpResult, seconds)}`` for the test seeds.

    ``seconds`` covers tracing, grouping and the search.
    """
    runs = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed in RANDOM5_SEEDS:
            for ex in (2, None):
                t0 = time.perf_counter()
                family, _, training = random5_training(seed)
                result = iterate(family, training, EpSearchConfig(exploration_after=ex))
                runs[seed, ex] = (family, training, result, time.perf_counter() - t0)
    return runs


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


def kato_p(kappa):
    return 4 * (1 + np.asarray(kappa) ** 2)

