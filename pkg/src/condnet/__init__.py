"""Effective electrical conductivity of two-phase composites.

Generates periodic samples of overlapping spherical and cylindrical
inclusions (or ingests segmented voxel volumes), builds their weighted
contact graphs, and solves the resulting circuit systems to homogenize
the conductivity tensor.
"""

__version__ = "0.1.0"

from .errors import (
    BadSlice,
    CondnetError,
    ConfigError,
    DegenerateFit,
    FormatError,
    InsufficientData,
    PlacementFailure,
    RelaxationFailure,
    SingularSystem,
    SizeMismatch,
)
from .geometry import (
    Contact,
    Cylinder,
    Sphere,
    UnitCell,
    boundary_contact,
    contact,
    cylinder_cylinder_contact,
    min_image_delta,
    pair_contacts,
    sphere_cylinder_contact,
    sphere_sphere_contact,
    volume_fraction_estimate,
)
from .generator import (
    GenerationSpec,
    Sample,
    generate,
    generate_md,
    generate_rsa,
    load_sample,
    puff_up,
    save_sample,
)
from .graph import (
    CalibrationConstants,
    CircuitGraph,
    GraphMatrices,
    build_contact_graph,
    conductance_from_contact,
    graph_matrices,
    load_graph,
    percolates,
    save_graph,
)
from .solver import (
    CircuitSolution,
    ConductivityTensor,
    assemble_system,
    conductivity_tensor,
    effective_conductance,
    solve,
    solve_system,
)
from .voxel import (
    VoxelGrid,
    load_slice_stack,
    load_voxel_grid,
    voxel_effective_conductivity,
    voxel_graph,
    voxelize_sample,
)
from .calibrate import (
    FitResult,
    ReferencePoint,
    fit_constants,
    load_constants,
    load_reference_points,
    save_constants,
)
from .montecarlo import (
    CampaignConfig,
    CampaignResult,
    export_csv,
    run_campaign,
    rve_convergence_scan,
    split_seed,
)
