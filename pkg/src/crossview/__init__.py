"""Cross-view (satellite / UAV / ground) 3D reconstruction and localization
toolkit: shared-frame geometry, orthographic satellite tiles, training losses,
evaluation metrics, view pairing, depth fusion, multi-view registration, a
synthetic data generator, and a CLI tying it all together."""

from .align import (
    Correspondence,
    CorrespondenceSet,
    Similarity,
    build_nn_correspondences,
    estimate_rho,
    register_views,
    umeyama,
)
from .depthfusion import (
    PCC_GATE,
    DepthGrid,
    FusionResult,
    fit_scale_shift,
    fuse_and_filter,
    pearson,
)
from .embedding import FourierPE, fourier_pe, gated_fusion
from .errors import (
    ConfigurationError,
    CrossviewError,
    DegenerateInputError,
    IOFailure,
    StructuralError,
    ValidationError,
)
from .evaluate import evaluate_sample, localize_sample, tile_localization
from .frames import (
    EARTH_RADIUS_M,
    GROUND,
    MODALITIES,
    SATELLITE,
    SATELLITE_HEIGHT_M,
    UAV,
    GeoPoint,
    Intrinsics,
    Pose,
    TriViewSample,
    ViewRecord,
    geo_to_local,
    pose_from_angles,
    pose_from_geo,
    redefine_altitudes,
    relative_pose,
    rotation_from_angles,
)
from .losses import (
    ConfMap,
    LossComponents,
    LossWeights,
    PointMap,
    depth_weights,
    loss_cam,
    loss_conf,
    loss_geo,
    loss_norm,
    normals_from_pointmap,
    optimal_scale,
    total_loss,
)
from .metrics import (
    LocEval,
    MetricsReport,
    PoseEval,
    SampleMetrics,
    acc_mean,
    aggregate,
    delta_ratio,
    exact_median,
    kitti_decomposition,
    localization_eval,
    pck,
    pose_errors,
    recall_and_auc,
    wrapped_yaw_err,
)
from .ortho import (
    MAX_TILE_SHIFT_M,
    OOD_TILE_EXTENT_M,
    RAW_SATELLITE_ALTITUDE_M,
    TILE_EXTENT_M,
    SatTile,
    altitude_sweep,
    camera_on_tile,
    locate_on_tile,
    ortho_lift,
    tile_shift_sample,
    zncc,
)
from .pairing import (
    DEFAULT_CELL_M,
    VoxelSet,
    iou_score,
    overlap_score,
    select_tuples,
    voxelize,
)
from .sampleio import (
    LoadedSample,
    read_f32,
    read_ply,
    read_sample,
    split_scenes,
    validate_meta,
    write_f32,
    write_ply,
    write_prediction,
    write_sample,
)
from .synth import (
    CaptureConfig,
    NoiseSpec,
    PerturbedBundle,
    SceneSpec,
    SynthSample,
    first_hit,
    make_sample,
    perturb,
    random_scene,
    render_depth,
    render_ortho,
)

__version__ = "0.1.0"
