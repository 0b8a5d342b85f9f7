import numpy as np
import pytest

from toothsparse.synthetic import SynthConfig, generate_cohort
from toothsparse.teeth import ALL_LABELS

from support import truth_dictionaries

SMALL_POINTS = {lab: 30 for lab in ALL_LABELS}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_cohort():
    """Noiseless rank-3 cohort with 30 points per tooth and exact point order."""
    cfg = SynthConfig(n_subjects=12, latent_rank=3, points_per_tooth=SMALL_POINTS, scramble=False, seed=5)
    return generate_cohort(cfg)


@pytest.fixture(scope="session")
def small_dicts(small_cohort):
    """Ground-truth dictionaries over the first 9 subjects of ``small_cohort``."""
    template, subjects = small_cohort
    return truth_dictionaries(subjects[:9], template)


def pytest_terminal_summary(terminalreporter):
    from support import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
