"""Simulate satellite imagery from high-resolution aerial surveys."""

from .augment import AugmentConfig, augment_pair, make_warp_field, transform_labels
from .blur import BlurReport, laplacian_variance
from .calibration import (AmbiguousCrossing, CalibrationError, CalibrationResult, SweepConfig,
                          TargetNotBracketed, calibrate_q, lv_curve)
from .optics import (CameraSpec, DegradeConfig, PsfKernel, convolve, degrade, downsample_bicubic,
                     make_psf, q_from_camera)
from .pipeline import PipelineConfig, PipelineError, build_dataset
from .raster import (Box, LabelFormatError, LabelSet, PatchPair, Raster, RasterIOError, clip_labels,
                     load_raster, parse_labels, read_labels, save_raster, serialize_labels,
                     write_labels)
from .registration import (FeaturelessWindow, GeoImage, NoOverlapError, SimilarityTransform,
                           apply_transform, crop_common_extent, estimate_similarity,
                           make_patch_pairs, phase_correlate, tile_aligned_set, tile_grid)
from .samples import sample_photo, textured_image

__version__ = "0.1.0"
