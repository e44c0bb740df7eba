import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_profile():
    from retailcast.panelgen import GeneratorProfile
    return GeneratorProfile(n_products=12, n_stores=3, n_groups=3, horizon_days=240, seed=7)


@pytest.fixture(scope="session")
def small_panel(small_profile):
    from retailcast.panelgen import generate_panel
    return generate_panel(small_profile)


@pytest.fixture(scope="session")
def small_matrices(small_panel, small_profile):
    from retailcast.preprocess import SplitSpec, build_feature_matrix
    spec = SplitSpec(small_profile.cutoff_date)
    raw = build_feature_matrix(small_panel, spec, imputed=False, seed=0)
    imp = build_feature_matrix(small_panel, spec, imputed=True, seed=0)
    return raw, imp


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
