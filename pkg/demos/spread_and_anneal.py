"""How a real-valued delay reaches integer time steps.

A recurrent spike with delay d is smeared over neighbouring steps by a
triangle whose half-width shrinks every epoch. Early on the gradient sees
a wide window of candidate lags; by the end the mass sits on the two
integers around 1 + d, and evaluation snaps to the nearest one.
"""

from __future__ import annotations

import numpy as np

from delrec.kernel import SigmaSchedule, horizon, kernel_table, sigma_at_epoch

DELAY = 4.3
EPOCHS = 30


def bar(weights: np.ndarray) -> str:
    shades = " .:-=+*#%@"
    top = weights.max()
    return "".join(shades[int(round(w / top * (len(shades) - 1)))] for w in weights)


def main() -> None:
    sched = SigmaSchedule(sigma_init=10.0, decay=0.95, n_epochs=EPOCHS)
    width = horizon(sched.sigma_init, [DELAY]).length
    print(f"delay {DELAY}: spread over arrival offsets 0..{width - 1}\n")
    for epoch in (0, 5, 10, 15, 20, 25, 30):
        sigma = sigma_at_epoch(sched, epoch)
        weights = kernel_table(width, np.array([DELAY]), sigma)[:, 0]
        print(f"epoch {epoch:2d}  sigma {sigma:6.3f}  mass {weights.sum():.3f}  |{bar(weights)}|")
    final = kernel_table(width, np.array([DELAY]), 0.0)[:, 0]
    hit = np.nonzero(final)[0]
    print(f"\nat zero spread: offsets {hit.tolist()} carry {final[hit].round(3).tolist()}")
    print(f"rounded evaluation delivers everything at offset {int(np.floor(DELAY + 0.5)) + 1}")


if __name__ == "__main__":
    main()
