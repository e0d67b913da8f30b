import numpy as np
import pytest
from hypothesis import settings

from dualora.adapters import init_dual, past_warmup
from dualora.matrix import RngStream, gaussian

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

VARIANTS = ("full", "no_relu", "no_sign", "fixed_binary")
SCHEMES = ("ste", "xnor", "dorefa")
ACTIVATIONS = ("relu", "abs", "sigmoid")


@pytest.fixture
def rng():
    return RngStream(7)


def live_dual(d=6, k=5, r1=2, r2=3, seed=0, std=0.5, **kw):
    """Gaussian Dual adapter with the warm-up ramp already completed."""
    return past_warmup(init_dual(d, k, r1, r2, std=std, rng=RngStream(seed), **kw))



ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(':'))):
            terminalreporter.write_line(line)
