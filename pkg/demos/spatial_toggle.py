"""
Does the arrangement of senders matter?
=======================================

4000 senders either packed in a slab beside the receiver or spread on a
sphere around it.  The reduced network makes this cheap (about 30 s each).
The toggle's switching threshold is scanned first so the final signal
levels can be read against it.
"""

import numpy as np

from diffnet import simulate_reduced
from diffnet.analysis import classify_toggle
from diffnet.kinetics import REFERENCE_PARAMS as P
from diffnet.scenarios import load_preset, prepare
from diffnet.types import CellKind

rp = P["receiver"]


def toggle_rates(lac, tet, u):
    act = u**2 / (rp.K_u**2 + u**2)
    return (rp.a_r1 * rp.K_2**2 / (rp.K_2**2 + tet**2) - rp.gamma_r1 * lac,
            rp.a_r2 * (act + rp.K_1**2 / (rp.K_1**2 + lac**2)) - rp.gamma_r2 * tet)


# Count sign changes of the LacI nullcline residual to see where the OFF state disappears
for u in np.arange(0.0, 8.01, 1.0):
    lac = np.linspace(0.0, 600.0, 60001)
    act = u**2 / (rp.K_u**2 + u**2)
    tet = rp.a_r2 * (act + rp.K_1**2 / (rp.K_1**2 + lac**2)) / rp.gamma_r2
    r = toggle_rates(lac, tet, u)[0]
    n = int(np.count_nonzero(np.diff(np.signbit(r))))
    print(f"u={u:4.1f} nM: {n} equilibria")

for preset in ("paper-4-2-slab", "paper-4-2-shell"):
    sc = prepare(load_preset(preset))
    tr = simulate_reduced(sc.spec, sc.config["t_end"], sc.config["output_dt"])
    rx = [i for i, k in enumerate(sc.spec.kinds) if k is CellKind.RECEIVER][0]
    lac, tet = tr.final_state(rx)
    print(f"\n{preset}: {sc.spec.n_senders} senders, receiver u={tr.signals[-1, rx]:.3f} nM, "
          f"LacI={lac:.1f}, TetR={tet:.1f} -> {classify_toggle(tr, rx).value}")
