import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from globalspec.core import MissamplingField, Record, RecordSet, SinusoidModel, evaluate_signal  # noqa: E402

MILANKOVITCH_PERIODS = (100.0, 41.0, 23.0, 19.0)
MILANKOVITCH_AMPLITUDES = (1.0, 0.8, 0.6, 0.6)


def milankovitch_records(n_records=3, n_samples=300, span=800.0, seed=0, noise_std=0.0):
    """Noise-free (or noisy) records of the four-cycle template on random times."""
    rng = np.random.default_rng(seed)
    amps = np.tile(MILANKOVITCH_AMPLITUDES, (n_records, 1))
    phases = rng.uniform(0, np.pi / 5, size=amps.shape)
    truth = SinusoidModel.from_periods(MILANKOVITCH_PERIODS, amps, phases)
    recs = []
    for m in range(n_records):
        t = np.sort(rng.uniform(0, span, n_samples))
        y = evaluate_signal(truth, m, t) + noise_std * rng.normal(size=t.size)
        recs.append(Record(f"core{m + 1}", t, y))
    return RecordSet(tuple(recs)), truth


@pytest.fixture(scope="session")
def milankovitch():
    return milankovitch_records()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def zero_field(records):
    return MissamplingField.zeros(records)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
