"""Contact-force regression from synchronized RGB, depth, and force streams.

The package covers the full loop: synthetic data generation, stream
synchronization, depth-to-point-cloud geometry, per-frame encoders, a
temporal convolutional regressor, training, and evaluation.  Heavy kernels
live in :mod:`forcesense.kernels` with a numba and a pure-numpy backend
selected by the ``FORCESENSE_KERNELS`` environment variable.
"""

from .errors import CheckpointError, ConfigError, DatasetError, TrainingDiverged
from .geometry import (CameraIntrinsics, PointCloud, depth_to_input_cloud,
                       downsample_uniform, normalize_unit_sphere, unproject)
from .io_dataset import (DEFAULT_SYNC_TOLERANCE_S, DatasetSplit, DepthImage,
                         RgbImage, StreamRecord, SyncedFrame, read_manifest,
                         read_pgm16, read_ppm, split_dataset, synchronize,
                         write_pgm16, write_ppm)
from .encoders import (FeatureVector, PointEncoder, RgbEncoder, concat_features,
                       encode_points, encode_rgb)
from .evaluation import (AblationResult, MetricsReport, bin_errors,
                         compute_metrics, mae, pearson_r, percentage_error,
                         run_ablation, table1_consistency_check)
from .pipeline import FrameDataset, load_frame_dataset
from .synthgen import SceneConfig, generate_dataset, generate_trajectory, render_frame
from .tcn import (ForceModel, ModelConfig, TemporalConvNet, TrainConfig,
                  TrainResult, Window, WindowSet, build_windows, predict,
                  tcn_forward, train)

__version__ = "0.1.0"

__all__ = [
    "AblationResult", "CameraIntrinsics", "CheckpointError", "ConfigError",
    "DEFAULT_SYNC_TOLERANCE_S", "DatasetError", "DatasetSplit", "DepthImage",
    "FeatureVector", "ForceModel", "FrameDataset", "MetricsReport",
    "ModelConfig", "PointCloud", "PointEncoder", "RgbEncoder", "RgbImage",
    "SceneConfig", "StreamRecord", "SyncedFrame", "TemporalConvNet",
    "TrainConfig", "TrainResult", "TrainingDiverged", "Window", "WindowSet",
    "bin_errors", "build_windows", "compute_metrics", "concat_features",
    "depth_to_input_cloud", "downsample_uniform", "encode_points",
    "encode_rgb", "generate_dataset", "generate_trajectory",
    "load_frame_dataset", "mae", "normalize_unit_sphere", "pearson_r",
    "percentage_error", "predict", "read_manifest", "read_pgm16", "read_ppm",
    "render_frame", "run_ablation", "split_dataset", "synchronize",
    "table1_consistency_check", "tcn_forward", "train", "unproject",
    "write_pgm16", "write_ppm",
]
