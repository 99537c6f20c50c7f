"""Robust Wasserstein distances and barycenters on discrete measures.

Outliers are trimmed by routing mass to a zero-cost dummy atom, which turns
the robust problems into ordinary transport problems. Free-support
barycenters are computed by alternating minimization on a layered-sampling
coreset.
"""

from .bench import BenchConfig, BenchResult, run_bench
from .coreset import (
    CoresetResult,
    LayerPartition,
    LocalRegion,
    approx_init,
    build_coreset,
    outer_layer_weights,
    partition_layers,
)
from .errors import (
    CapacityError,
    ConvergenceError,
    InputError,
    ParseError,
    RebuildStormError,
    RWBError,
)
from .fixed import (
    FixedProblem,
    FixedSolution,
    awb_cost,
    rwb_cost,
    solve_fixed,
    solve_fixed_awb,
    solve_fixed_awb_exact,
)
from .free import FreeConfig, SolveTrace, solve_free_rwb, update_locations, update_weights
from .measures import (
    CostMatrix,
    DiscreteMeasure,
    WeightedMeasureSet,
    build_cost_matrix,
    load_dataset,
    load_measure,
    save_dataset,
    save_measure,
)
from .ot import (
    OtSolution,
    TransportPlan,
    solve_ot_entropic,
    solve_ot_exact,
    wasserstein_distance,
    wasserstein_power,
)
from .robust import (
    OutlierBudget,
    RobustSolution,
    augment_pair,
    phi_embed,
    psi_extract,
    robust_distance,
    robust_ot,
    robust_wasserstein,
)
from .synth import (
    ContaminationSpec,
    EvalReport,
    contaminate,
    evaluate,
    gen_gaussian_dataset,
    quantize_pointcloud,
    report_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
