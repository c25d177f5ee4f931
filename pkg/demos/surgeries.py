"""Opening, bubble insertion and reflect-glue on the identity.

Run: python demos/surgeries.py
"""

import math

from heterotopy.energy import p_energy
from heterotopy.maps import DiskBubble, identity_map, sample
from heterotopy.mesh import MeshKind, build_icosphere, make_chart
from heterotopy.surgery import bubble_map, open_and_insert, open_map, reflect_glue
from heterotopy.topology import brouwer_degree

QUANTUM = 8 * math.pi
mesh = build_icosphere(6)
chart = make_chart(MeshKind.SPHERE, (0.0, 0.0, 1.0), 0.6)
u = identity_map()
e_u = p_energy(sample(u, mesh)).total

# opening makes u constant near the chart center at a vanishing energy cost
for r in (0.3, 0.15, 0.075):
    e = p_energy(sample(open_map(u, chart, r), mesh)).total
    print(f"open r={r:<6} relative gap {abs(e - e_u) / e_u:.4%}")

# inserting a degree-k bubble shifts the degree by k and the energy by |k| quanta
for k in (1, -1, 2):
    f = sample(open_and_insert(u, chart, DiskBubble(k, 0.3), 0.3), mesh)
    print(f"insert k={k:+d}: degree {brouwer_degree(f).snapped}, "
          f"E/8pi = {p_energy(f).total / QUANTUM:.4f}")

# glueing two copies of the opened identity realizes their degree disparity (zero)
glue_chart = make_chart(MeshKind.SPHERE, (0.0, 0.0, 1.0), 0.9)
v = open_map(u, glue_chart, 0.7)
w = sample(bubble_map(reflect_glue(v, v, glue_chart, 0.7), glue_chart), mesh)
print(f"reflect-glue: degree {brouwer_degree(w).snapped}, E/8pi = {p_energy(w).total / QUANTUM:.4f}")
