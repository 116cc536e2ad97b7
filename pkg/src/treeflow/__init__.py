"""Left translation semigroups on weighted Lp spaces over directed metric trees."""

from .errors import *  # noqa: F401,F403
from .tree import (
    DirectedTree,
    TreeSpec,
    ancestor,
    build_tree,
    find_leaf,
    reachable_set,
    same_component,
)
from .lp_space import GridFunction, LpConfig, check_disnorm, norm, random_test_function
from .semigroup import (
    StackedFunctions,
    TimePoint,
    check_norm_bound,
    check_norm_bound_batch,
    check_semigroup_law,
    check_semigroup_law_batch,
    stacked_norms,
    step_index,
    strong_continuity_trend,
    translate,
    translate_interp,
    translate_stacked,
)
from .weights import (
    AdmissibilityReport,
    WeightFamily,
    build_norm_violator,
    check_admissibility,
    eval_weight,
    fit_admissibility,
    holder_infimum,
    min_weight,
)
from .dynamics import (
    CriterionReport,
    Witness,
    build_witness_rooted,
    build_witness_unrooted,
    criterion,
    leaf_obstruction,
    negative_certificate,
    orbit_density_probe,
    rooted_criterion,
    unrooted_criterion,
)
from .chain_oracle import HalfLineFunction, classical_translate, line_phi, phi

__version__ = "0.1.0"
