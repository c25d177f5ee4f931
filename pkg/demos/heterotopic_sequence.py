"""Competitors in degree 3 converging a.e. to the identity.

Open the identity near a point and insert a degree-2 bubble of shrinking
size t; the energies approach E(id) + 16 pi = 24 pi.

Run: python demos/heterotopic_sequence.py
"""

import math

from heterotopy.experiments import detect_bubbling, heterotopic_family, heterotopic_sequence
from heterotopy.maps import identity_map
from heterotopy.mesh import build_icosphere

QUANTUM = 8 * math.pi
schedule = [0.3, 0.2, 0.12]
mesh = build_icosphere(7)

rep = heterotopic_sequence(identity_map(), 3, schedule, mesh)
for r in rep.records:
    print(f"t={r.t:<5} E/8pi={r.energy / QUANTUM:.4f} degree={r.degree} "
          f"distance={r.distance:.3f} flagged={r.flagged}")
print(f"fitted limit {rep.fitted_limit:.3f}, target 24 pi = {rep.target_constant:.3f}")

# the lost energy concentrates at one point carrying the degree difference
for atom in detect_bubbling(heterotopic_family(identity_map(), 3, schedule, mesh)):
    print(f"atom at {atom.location.round(3)}: defect {atom.degree_defect}, "
          f"mass/8pi {atom.mass / QUANTUM:.3f}")
