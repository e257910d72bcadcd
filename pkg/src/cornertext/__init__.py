"""Corner-based oriented text detection engine.

Pure geometry and numerics: ground-truth target generation, the training
objective with analytic gradients, and the corner-grouping inference path
with rotated position-sensitive scoring, verified against synthetic oracle
scenes.
"""

from .errors import (ConfigError, DegenerateGeometry, FormatError, InvalidBox, SynthError)
from .geometry import (AxisAlignedBox, Point, RotatedRect, canonical_corner_order,
                       min_area_rect, rotated_iou)
from .pipeline import (CandidateBox, CornerDetection, Detection, PipelineConfig,
                       decode_corners, detect, detect_from_maps, rotated_nms,
                       rps_roi_average_pool, sample_and_group)
from .synth import Scene, SynthConfig, corrupt, generate_scene
from .targets import (CornerSquare, CornerType, DefaultBox, DefaultBoxConfig, OffsetTarget,
                      corner_squares, decode_offsets, encode_offsets,
                      generate_default_boxes, match, ps_masks)

__version__ = "0.1.0"
