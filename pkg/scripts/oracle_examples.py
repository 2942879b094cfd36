"""Compare automatic shape gradients with the hand-derived oracle formulas."""

import numpy as np

from shapediff import unit_square_mesh
from shapediff.examples import EXAMPLES

for n in (4, 8, 16, 32):
    for number, build in EXAMPLES.items():
        ex = build(unit_square_mesh(n))
        auto, ref = ex.automatic_gradient(), ex.oracle_gradient()
        rel = np.max(np.abs(auto - ref)) / np.max(np.abs(ref))
        print(f"example {number}  n={n:<3d} J={ex.functional.value(): .12f}  rel diff {rel:.2e}")
