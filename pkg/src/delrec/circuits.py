"""Two-neuron pattern-generator circuit driven through a schedule buffer.

Neurons are memoryless: a neuron fires at a step iff the summed input it
receives at that step (external plus arriving recurrent spikes) exceeds
one. All four recurrent connections carry weight one and an integer
transmission time ``D >= 1`` (a spike at ``t`` arrives at ``t + D``, i.e.
delay parameter ``d = D - 1``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .recurrent import ScheduleBuffer

BLUE, PINK = 0, 1
CONNECTIONS = ((BLUE, BLUE), (PINK, BLUE), (BLUE, PINK), (PINK, PINK))  # (pre, post)


def caption_inputs(steps: int = 40, onset: int = 1) -> np.ndarray:
    """External drive ``(steps, 2)``: blue gets one spike at ``onset`` and
    ``onset + 3``, pink gets two spikes at ``onset + 1``; nothing before."""
    x = np.zeros((steps, 2))
    x[onset, BLUE] = 1.0
    x[onset + 3, BLUE] = 1.0
    x[onset + 1, PINK] = 2.0
    return x


def simulate_circuit(transit: np.ndarray, inputs: np.ndarray, threshold: float = 1.0) -> np.ndarray:
    """Spike raster ``(steps, 2)`` for transit times ``transit[post, pre]``."""
    transit = np.asarray(transit, dtype=np.int64)
    if transit.shape != (2, 2) or transit.min() < 1:
        raise ValueError("transit times must be a 2x2 array of integers >= 1")
    steps = inputs.shape[0]
    horizon = int(transit.max())
    buf = ScheduleBuffer(horizon + 1, (2,))
    raster = np.zeros((steps, 2))
    for t in range(steps):
        total = inputs[t] + buf.read()
        s = (total > threshold).astype(np.float64)
        raster[t] = s
        buf.clear()
        contrib = np.zeros((horizon, 2))
        for post in range(2):
            for pre in range(2):
                contrib[transit[post, pre] - 1, post] += s[pre]
        buf.schedule(contrib)
        buf.advance()
    return raster


def sustained_period(raster: np.ndarray, settle: int | None = None) -> int | None:
    """Smallest period of the nonempty tail pattern, or ``None`` if the tail
    is silent or aperiodic. The tail starts at ``settle`` (default: half way)."""
    steps = raster.shape[0]
    settle = steps // 2 if settle is None else settle
    tail = raster[settle:]
    if not tail.any():
        return None
    for period in range(1, len(tail) // 2 + 1):
        if np.array_equal(tail[period:], tail[:-period]):
            return period
    return None


def is_transient(raster: np.ndarray) -> bool:
    """Each neuron fires exactly once and activity dies out."""
    return bool(np.all(raster.sum(axis=0) == 1))


@dataclass(frozen=True)
class CircuitMatch:
    transit: tuple  # ((blue<-blue, blue<-pink), (pink<-blue, pink<-pink)) with the changed entry at 1
    changed: tuple  # (pre, post) of the connection switched from 1 to 3
    period: int
    transient_raster: np.ndarray
    sustained_raster: np.ndarray


def search_pattern_generator(max_transit: int = 5, steps: int = 40,
                             prefer: tuple = (PINK, BLUE)) -> list[CircuitMatch]:
    """All assignments where switching one connection from 1 to 3 turns a
    transient response into sustained periodic firing.

    Matches on the ``prefer`` connection come first; order is otherwise
    lexicographic over transit assignments.
    """
    x = caption_inputs(steps)
    matches = []
    for changed in sorted(CONNECTIONS, key=lambda c: c != prefer):
        pre, post = changed
        others = [c for c in CONNECTIONS if c != changed]
        for values in itertools.product(range(1, max_transit + 1), repeat=3):
            transit = np.ones((2, 2), dtype=np.int64)
            for (p, q), v in zip(others, values):
                transit[q, p] = v
            before = simulate_circuit(transit, x)
            if not is_transient(before):
                continue
            after_t = transit.copy()
            after_t[post, pre] = 3
            after = simulate_circuit(after_t, x)
            period = sustained_period(after)
            if period is None:
                continue
            matches.append(CircuitMatch(tuple(map(tuple, transit.tolist())), changed, period,
                                        before, after))
    return matches
