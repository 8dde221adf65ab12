"""Two coincidence-detecting neurons, four recurrent connections.

With every transmission time short the circuit answers its input burst
once and falls silent. Lengthening a single connection from one step to
three lets the echoes line up again and the pair keeps firing forever.
This script finds such a circuit by exhaustive search and prints both
rasters.
"""

from __future__ import annotations

from delrec.circuits import BLUE, PINK, caption_inputs, search_pattern_generator

NAMES = {BLUE: "blue", PINK: "pink"}


def show(raster, width: int = 30) -> None:
    for neuron in (BLUE, PINK):
        row = "".join("|" if s else "." for s in raster[:width, neuron])
        print(f"  {NAMES[neuron]:>4s} {row}")


def main() -> None:
    inputs = caption_inputs()
    print("external drive (first 8 steps):")
    for neuron in (BLUE, PINK):
        print(f"  {NAMES[neuron]:>4s} {inputs[:8, neuron].astype(int).tolist()}")

    matches = search_pattern_generator(max_transit=5)
    print(f"\n{len(matches)} circuits turn transient into sustained firing")
    best = matches[0]
    pre, post = best.changed
    print(f"transit times [post][pre] = {best.transit}")
    print(f"switching {NAMES[pre]} -> {NAMES[post]} from 1 to 3 steps\n")

    print("before (one answer, then silence):")
    show(best.transient_raster)
    print(f"\nafter (period {best.period}):")
    show(best.sustained_raster)


if __name__ == "__main__":
    main()
