"""Longer recurrent delays shorten the backward path through time.

A single self-connected neuron fires every step. Its spike at the last
step depends on the spike span steps earlier through a chain of
recurrent reads; each read jumps 1 + d steps, so the chain gets shorter
as the delay grows.
"""

from __future__ import annotations

import numpy as np

from delrec.autodiff import Tape, Var, dependency_hops
from delrec.neuron import NeuronConfig
from delrec.recurrent import RecurrentDelayLayer

SPAN = 24


def hops(delay: float) -> int:
    cfg = NeuronConfig(tau_mem=2.0, v_threshold=1.0, reset_kind="hard")
    layer = RecurrentDelayLayer(Var([[0.5]], requires_grad=True), Var([delay], requires_grad=True),
                                Var(2.0), cfg, sigma=0.0)
    drive = Var(np.full((SPAN + 1, 1, 1), 2.0), requires_grad=True)
    with Tape():
        out = layer.forward(drive, training=True)
    per_step = out.node.parents
    # ignore the membrane carry-over so only recurrent jumps count
    return dependency_hops(per_step[SPAN], per_step[0], "recurrent_read", skip={"charge": (0,)})


def main() -> None:
    print(f"recurrent reads linking a spike to the one {SPAN} steps earlier")
    for d in (0, 1, 2, 3, 5, 7, 11):
        print(f"  d = {d:2d}  ->  {hops(float(d)):2d} hops")


if __name__ == "__main__":
    main()
