"""Evaluation stack for volumetric segmentation challenges.

Dice/Hausdorff metrics, four-factor test-time augmentation, Sobol' robustness
scores, weighted rank aggregation and tetrahedral/surface mesh quality.
"""

from .augment import AugmentationParams, AugmentedCase, augment_case, apply_geometric, apply_intensity, sample_params
from .errors import (
    CorruptFile,
    DegenerateOutput,
    DomainError,
    EmptyField,
    EmptyMask,
    GeometryMismatch,
    IncompleteDesign,
    IncompleteRecord,
    InvalidGeometry,
    IoError,
    SegaEvalError,
    UnsupportedFormat,
)
from .mesh import (
    SurfaceMesh,
    TetMesh,
    marching_cubes,
    read_tetmesh,
    scaled_jacobian,
    smooth,
    tet_quality_report,
    watertight_check,
    write_stl,
)
from .metrics import MetricResult, dice, distance_transform, evaluate_pair, hausdorff, mask_volume_ml, surface_voxels
from .ranking import (
    Leaderboard,
    TeamRecord,
    final_ranking,
    p_jacobian,
    p_metric,
    rank_values,
    robust_stats,
)
from .sensitivity import (
    RobustnessScores,
    SaltelliDesign,
    SobolIndices,
    build_saltelli_design,
    estimate_sobol,
    robustness_scores,
)
from .volume import LabelMask, VoxelGrid, index_to_world, read_nrrd, world_to_index, write_nrrd

__version__ = "0.1.0"
