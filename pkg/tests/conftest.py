import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from semnav.belief_map import GridSpec
from semnav.simulator.world import ObjectInstance, Room, WorldModel

settings.register_profile(
    "default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


class FixedEmbedder:
    """Embedder backed by an explicit label -> vector table."""

    def __init__(self, table: dict[str, np.ndarray]):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dim = len(next(iter(self.table.values())))

    def embed_text(self, label):
        return self.table[label]


def basis(dim: int, i: int) -> np.ndarray:
    e = np.zeros(dim)
    e[i] = 1.0
    return e


def open_room_world(width=12, height=12, objects=(), rooms=None, affinity=None) -> WorldModel:
    """A walled rectangle with one room covering the interior."""
    spec = GridSpec(0.25, width, height)
    occ = np.zeros(spec.shape, dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    if rooms is None:
        rooms = [Room("kitchen", (1, 1, width - 1, height - 1))]
    world = WorldModel(spec, occ, list(rooms), list(objects), affinity or {})
    world.validate()
    return world


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_world():
    objs = [
        ObjectInstance("mug_0", "mug", (6, 6)),
        ObjectInstance("plant_0", "plant", (3, 8)),
        ObjectInstance("book_0", "book", (9, 3)),
    ]
    return open_room_world(objects=objs)


def pytest_terminal_summary(terminalreporter):
    from verdicts import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
