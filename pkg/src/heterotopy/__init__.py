"""Sobolev maps into S^2 at desk scale: energy, degree, bubble surgeries, heterotopy."""

from .energy import (EnergyReport, ball_energy, energy_gradient, p_energy, project_tangent,
                     region_energy)
from .errors import (ChartError, CompositionError, HeterotopyError, NumericError,
                     ParameterError, ResourceError, SurgeryError, UnsupportedError)
from .experiments import (ConcentrationAtom, ExperimentTrace, HetReport, MinimizeConfig,
                          detect_bubbling, estimate_etop, heterotopic_family,
                          heterotopic_sequence, insertion_identity, minimize_energy)
from .maps import (AnalyticMap, DiskBubble, DiskConstant, VertexField, constant_map,
                   identity_map, l_m_distance, sample, stereographic_power_map)
from .mesh import Chart, MeshKind, TriMesh, build_flat_torus, build_icosphere, make_chart
from .surgery import (bubble_map, concatenate, cylinder_homotopy, implant, insert_bubble,
                      open_and_insert, open_map, reflect_glue)
from .topology import (DegreeReport, HomotopyClassZ, brouwer_degree, check_amgm_bound,
                       etop_sphere, is_trivial_by_gap, jacobian_integrals, local_degree)

__version__ = "0.1.0"
