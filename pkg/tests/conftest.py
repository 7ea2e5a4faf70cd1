import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")

from fpplab import FieldSpec, ModelSpec, Rect, build_model  # noqa: E402
from fpplab.field import FieldRealization  # noqa: E402


def micro_field(rng, k, window=(0.0, 4.0, 0.0, 4.0), marks=None):
    """A hand-built Poisson-type realisation with ``k`` uniform points."""
    x0, x1, y0, y1 = window
    xy = np.column_stack([rng.uniform(x0, x1, k), rng.uniform(y0, y1, k)])
    m = rng.exponential(size=k) if marks is None else np.asarray(marks, float)
    return FieldRealization(FieldSpec(Rect(*window)), xy, m, rng.uniform(size=k))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def hn_small():
    f = __import__("fpplab").sample_field(FieldSpec(Rect(-6, 26, -10, 10), master_seed=3))
    return build_model(ModelSpec("howard_newman"), f)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: int(k[2:])):
            terminalreporter.write_line(lines[key])
