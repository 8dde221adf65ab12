from __future__ import annotations

import pytest

from delrec.config import from_dict


def tiny_config(seed: int = 0, **sections):
    raw = {
        "run": {"seed": seed, "epochs": 2, "batch_size": 16},
        "model": {"hidden_sizes": [8, 8], "init_gain": 8.0, "rec_delay_scale": 6.0},
        "readout": {"n_classes": 4},
        "data": {"n_samples": 80},
    }
    for name, values in sections.items():
        raw.setdefault(name, {}).update(values)
    return from_dict(raw)


@pytest.fixture
def tiny():
    return tiny_config


_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str):
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
