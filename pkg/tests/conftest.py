import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def pipeline_models():
    """Both branch models trained with the pipeline recipe (a few minutes, once per session)."""
    import time
    from types import SimpleNamespace

    from zepeye.config import Illumination
    from zepeye.training import train_branch

    t0 = time.perf_counter()
    frontal = train_branch(Illumination.FRONTAL, seed=0)
    lateral = train_branch(Illumination.LATERAL, seed=0)
    return SimpleNamespace(frontal=frontal, lateral=lateral, seconds=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def heldout_faces():
    from zepeye.dataset import VariationRanges, synth_faces
    return synth_faces(200, VariationRanges(), seed=99, prefix="t")


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record one PASS/FAIL line per acceptance criterion and echo it live."""
    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
