"""Post-processing, fusion, scoring and statistical analysis of 3-class
liver/tumor segmentations on anisotropic voxel grids."""

from .analysis import (
    BBox,
    CaseRecord,
    PatchSpec,
    aggregate_patch_probabilities,
    component_bboxes,
    patch_coverage,
    plan_patch_grid,
    stratified_kfold,
)
from .metrics import (
    AggregateReport,
    CaseMetrics,
    aggregate,
    assd,
    dice,
    evaluate_case,
    hausdorff,
    overall_liver_mask,
    rmse_tumor_burden,
    surface_dice,
    tumor_burden,
)
from .morphology import (
    ComponentLabeling,
    Connectivity,
    binary_morph,
    extract_boundary,
    fill_holes,
    keep_largest_component,
    label_components,
)
from .pipeline import (
    PipelineMode,
    PostprocessConfig,
    argmax_labelization,
    fuse_dual_binary,
    postprocess,
    run_pipeline,
    threshold_binary,
)
from .stats import (
    PairedSample,
    SignificanceResult,
    paired_t_test_one_sided,
    run_significance_protocol,
    shapiro_wilk,
    wilcoxon_signed_rank,
)
from .uncertainty import (
    Lesion,
    LesionReport,
    build_lesion_report,
    classify_lesions,
    extract_lesions,
    lesion_uncertainty,
    score_lesions,
    spearman,
)
from .volume import (
    BinaryMask,
    LabelMap,
    ProbMap,
    Spacing,
    Volume,
    as_labelmap,
    read_probmap,
    read_volume,
    voxel_volume_mm3,
    write_probmap,
    write_volume,
)

__version__ = "0.1.0"
