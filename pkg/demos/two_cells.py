"""
One sender, one receiver: full field against the reduced network
=================================================================

Both models are run for 1000 min and the receiver's toggle proteins are
compared.  The full model takes roughly 15 s.
"""

from diffnet import CellSpec, DomainSpec, SystemSpec, simulate_full, simulate_reduced
from diffnet.analysis import classify_toggle, max_abs_error, time_scales
from diffnet.kinetics import REFERENCE_PARAMS as P

spec = SystemSpec(DomainSpec(20.0, P["D"]),
                  (CellSpec((0.0, 0.0, 0.0), "sender"), CellSpec((15.0, 0.0, 0.0), "receiver")),
                  P["signal"], P["sender"], P["receiver"])

ts = time_scales(spec)
print(f"eps_u={ts.eps_u:.3g}, eps_v={ts.eps_v:.3g}  (small means the reduction should hold)")

red = simulate_reduced(spec, 1000.0)
full = simulate_full(spec, t_end=1000.0)

print("\n   t      LacI(full)  LacI(red)   TetR(full)  TetR(red)   u(full)   u(red)")
for t in (0, 10, 50, 100, 250, 500, 1000):
    i = int(t)
    print(f"{t:5d}  {full.species(1, 0)[i]:10.4f} {red.species(1, 0)[i]:10.4f}"
          f"  {full.species(1, 1)[i]:10.4f} {red.species(1, 1)[i]:10.4f}"
          f"  {full.signals[i, 1]:8.4f} {red.signals[i, 1]:8.4f}")

err = max_abs_error(full, red, ["x21", "x22", "u2"])
print("\nmax |full - reduced|:", {k: f"{v:.2e}" for k, v in err.items()})
print("receiver:", classify_toggle(full, 1).value, "(full)", classify_toggle(red, 1).value, "(reduced)")
