import numpy as np
import pytest
from hypothesis import settings

from terrain_explorer.terrain import TerrainConfig, generate_terrain

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def flat_terrain():
    return generate_terrain(TerrainConfig(extent_x=20.0, extent_y=20.0), 0)


@pytest.fixture(scope="session")
def mixed_terrain():
    cfg = TerrainConfig(extent_x=40.0, extent_y=40.0, base_amplitude=0.3, random_craters=6,
                        random_rocks=60, spawn_points=[(20.0, 20.0)])
    return generate_terrain(cfg, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[VERDICTS]

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
        lines.append(line + (f" ({detail})" if detail else ""))
        print(lines[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
