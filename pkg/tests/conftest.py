import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from radioflow.collision import synthesize_collision_corpus, train_collision
from radioflow.nn import TrainConfig
from radioflow.radar import forward_chirp, forward_frame, linear_layout

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

COLLISION_SCENES = 1000
COLLISION_TRAIN = TrainConfig(batch_size=32, learning_rate=3e-3, max_epochs=20, loss="cross-entropy")


@pytest.fixture(scope="session")
def forward_radar():
    return forward_chirp(), forward_frame(), linear_layout(2, 4)


@pytest.fixture(scope="session")
def collision_bundle(forward_radar):
    """Corpus, trained classifier and validation indices, shared across modules."""
    chirp, frame, layout = forward_radar
    ds = synthesize_collision_corpus(COLLISION_SCENES, chirp, frame, layout, seed=0)
    res, tr, va = train_collision(ds, COLLISION_TRAIN)
    return {"dataset": ds, "result": res, "train_idx": tr, "val_idx": va}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}
N_CRITERIA = 12


@pytest.fixture
def record():
    def _record(n: int, ok: bool, detail: str):
        ACCEPTANCE[n] = (bool(ok), detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    ran = [n for n in range(1, N_CRITERIA + 1) if n in ACCEPTANCE]
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: NOT RUN")
