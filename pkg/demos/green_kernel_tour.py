"""
Green's kernel and communication gain
======================================

How much of a sender's output reaches its neighbours, straight from the
closed-form gain matrix.  Runs in well under a second.
"""

import numpy as np

from diffnet import CellSpec, DomainSpec, assemble_gain, assemble_green
from diffnet.kinetics import REFERENCE_PARAMS as P

dom = DomainSpec(L=20.0, D=P["D"])
V = 4 * np.pi * P["R"] ** 3 / 3

# A sender at the centre and receivers at growing distance
cells = [CellSpec((0.0, 0.0, 0.0), "sender")]
cells += [CellSpec((r, 0.0, 0.0), "receiver") for r in (5.0, 10.0, 15.0)]
G = assemble_green(dom, cells)
print("Green's matrix entries:")
print(np.array2string(G.entries, precision=3))

gain = assemble_gain(G, P["signal"], V)
y = 400.0  # a typical sender output
print("\nsteady u at each cell for y = 400 nM:")
for c, u in zip(cells, gain.entries[:, 0] * y):
    print(f"  {c.kind.value:8s} at r1={c.position[0]:4.1f}  u={u:8.4f} nM")

# The wall at L soaks up signal: the same pair moved towards the boundary hears less
far = assemble_gain(assemble_green(dom, [CellSpec((5.0, 0, 0), "sender"), CellSpec((15.0, 0, 0), "receiver")]),
                    P["signal"], V)
print(f"\nsame 10 um spacing near the wall: u={far.entries[1, 0] * y:.4f} nM")
