"""Energy quantum and degree of the identity and stereographic power maps.

Run: python demos/energy_quantum.py
"""

import math

from heterotopy.energy import p_energy
from heterotopy.maps import identity_map, sample, stereographic_power_map
from heterotopy.mesh import build_icosphere
from heterotopy.topology import brouwer_degree

QUANTUM = 8 * math.pi

# the discrete energy of the identity approaches 8 pi from below
for level in range(2, 7):
    f = sample(identity_map(), build_icosphere(level))
    print(f"icosphere({level}): E/8pi = {p_energy(f).total / QUANTUM:.5f}")

# a degree-d rational map costs |d| quanta
mesh = build_icosphere(6)
for d in (1, 2, -3):
    f = sample(stereographic_power_map(d, 1.0), mesh)
    deg = brouwer_degree(f)
    print(f"power map d={d:+d}: degree {deg.snapped}, E/8pi = {p_energy(f).total / QUANTUM:.4f}")
