"""LiDAR point-cloud toolkit: beam-partition scan mixing, range/voxel
codecs, spatial-prior entropy analytics, a synthetic scanner, and a
desk-scale semi-supervised range-image segmenter."""

__version__ = "0.1.0"

from .cloud import PointCloud, attach_labels, concat, empty_cloud, strip_labels, subset
from .errors import ConfigError, FormatError, GenerationError, TrainingDiverged
from .labels import LabelMap, label_map_from_json, label_map_to_json
from .mixing import (
    FROM_FIRST,
    FROM_SECOND,
    ORDER_ODD_EVEN,
    ORDER_REVERSED,
    ORDER_SHUFFLED,
    MixResult,
    drop_even_areas,
    mix_pair_for_training,
    mix_scans,
    mixed_labels,
)
from .partition import (
    KIND_AZIMUTH,
    KIND_INCLINATION,
    KIND_RADIUS,
    KIND_RANDOM_AREA,
    KIND_RANDOM_POINT,
    AreaAssignment,
    PartitionSpec,
    assign_areas,
    azimuth,
    inclination,
    make_boundaries,
    partition_spec,
    radius,
    sample_num_areas,
)
from .prior import (
    AreaClassHistogram,
    accumulate_histogram,
    class_entropy,
    conditional_entropy,
    marginal_entropy,
    marginal_prediction,
    partition_entropy_report,
)
from .rangeview import RangeImage, range_features, range_project, range_unproject
from .scan_io import (
    read_labels_bin,
    read_scan_bin,
    write_labels_bin,
    write_scan_bin,
)
from .sensor import PRESETS, SensorConfig
from .synth import (
    Scene,
    SceneParams,
    SynthDataset,
    default_label_map,
    generate_scene,
    make_dataset,
    simulate_scan,
)
from .train import (
    EvalResult,
    Hyperparams,
    LossBreakdown,
    MixStrategy,
    TrainState,
    ce_loss,
    ema_update,
    evaluate,
    init_train_state,
    load_checkpoint,
    mt_loss,
    pseudo_label,
    save_checkpoint,
    train_iteration,
)
from .voxel import CylinderBounds, VoxelGrid, cylindrical_voxelize, voxel_csv
from .nn import SegModel, forward, init_model
