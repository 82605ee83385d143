"""Accessibility percolation under the Rough Mount Fuji label model:
exact critical thresholds on branching trees, closed-form probability
bounds, and Monte Carlo simulators for trees and integer lattices,
including a brick-based oriented-percolation coupling.
"""

__version__ = "0.1.0"

from .core import (
    LabelField,
    Metric,
    RmfParams,
    is_increasing,
    lp_distance,
    rmf_label,
    uniform_at,
)
from .analytic import (
    BoundsReport,
    CriticalPolynomial,
    EigenFunction,
    cutset_first_moment_bound,
    eigen_char_poly,
    eigenfunction_eval,
    eigenfunction_integral,
    lead_eigenvalue,
    m_critical,
    out_of_order_bound,
    path_increase_upper_bound,
    q_theta_eval,
    theta_bounds,
    theta_critical,
)
from .tree import (
    Frontier,
    MartingaleTrace,
    OffspringDistribution,
    estimate_theta_c_tree,
    martingale_trace,
    root_frontier,
    step_frontier,
    survival_probability,
)
from .lattice import (
    AccessibleSet,
    LatticeConfig,
    ResourceGuardError,
    accessible_set,
    crossing_probability,
    export_accessible,
    lattice_first_moment_bound,
    oriented_coupling_check,
    parse_accessible,
    sweep_accessible_min_theta,
    sweep_theta,
)
from .bricklayer import (
    Brick,
    BrickConfig,
    BrickId,
    brick_build,
    brick_good,
    compute_A,
    distance_gap_check,
    edge_open,
    goodness_probability,
    open_implies_increasing_check,
    simulate_bricklayer,
)
