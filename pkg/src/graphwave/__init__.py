"""Nonexistence hypotheses and blow-up experiments for semilinear wave inequalities on weighted graphs."""

__version__ = "0.1.0"

from .graph import (DisconnectedGraphWarning, GraphError, VertexSet, WeightedGraph,  # noqa: E402
                    build_graph, homogeneous_tree, lattice_zn, parse_graph, path_graph,
                    product_graph, random_connected_graph, read_graph, volume, write_graph)
from .metric import (PseudoMetric, TruncationError, annulus, ball, distance_map,  # noqa: E402
                     jump_size)
from .calculus import (HypothesisViolation, PreconditionError, distance_laplacian_report,  # noqa: E402
                       integration_by_parts_check, laplacian_apply, weighted_ibp_check)
from .conditions import (GrowthVerdict, Potential, growth_check, initial_data_report,  # noqa: E402
                         potential_from_tag, xdelta_norm)
from .cutoff import (CutoffFamily, cutoff_family, make_profiles, verify_cutoff_bounds,  # noqa: E402
                     zero_propagation_check)
from .simulate import Trajectory, integrate_wave, stable_dt, weak_residual  # noqa: E402
