import random
from collections import deque

import pytest

from dearfsim.config import Config
from dearfsim.dcf import BackoffState
from dearfsim.phy import EnergyLedger, PowerProfile


class ScriptedRng:
    """Returns queued values from ``randint``; falls back to a seeded generator."""

    def __init__(self, *draws, seed=0):
        self.draws = list(draws)
        self.fallback = random.Random(seed)

    def randint(self, a, b):
        if self.draws:
            v = self.draws.pop(0)
            assert a <= v <= b, (v, a, b)
            return v
        return self.fallback.randint(a, b)


class FakeDevice:
    def __init__(self, dev_id, draws=(), cw_min=15, state=None):
        self.id = dev_id
        self.queue = deque()
        self.backoff = BackoffState(cw_min)
        self.rng = ScriptedRng(*draws, seed=dev_id)
        self.ledger = EnergyLedger(PowerProfile().draws)
        if state is not None:
            self.ledger.set_state(state, 0)

    @property
    def awake(self):
        return self.ledger.awake


@pytest.fixture
def cfg():
    return Config()


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
