"""Foreign-object cleaning for photographed chest radiographs.

Detect bright foreign objects, segment a mask per object, inpaint the masked
pixels by fast-marching weighted sums, and score every stage.
"""

__version__ = "0.1.0"

from .detect import Detection, DetectionFilterConfig, ChtConfig, cht_detect, filter_and_nms, load_detections
from .errors import FocError, StageError
from .imaging import BoundingBox, Polygon, PreprocessConfig, normalize_minmax, preprocess
from .inpaint import InpaintConfig, fmm_distance, inpaint_objects, telea_inpaint
from .metrics import avg_dice, average_precision_50, completeness_report, evaluate_detections, mdoc, overlap_metrics
from .pipeline import PipelineConfig, run_batch, run_pipeline
from .segment import SegmentConfig, fallback_segment

__all__ = [
    "BoundingBox", "ChtConfig", "Detection", "DetectionFilterConfig", "FocError", "InpaintConfig",
    "PipelineConfig", "Polygon", "PreprocessConfig", "SegmentConfig", "StageError",
    "average_precision_50", "avg_dice", "cht_detect", "completeness_report", "evaluate_detections",
    "fallback_segment", "filter_and_nms", "fmm_distance", "inpaint_objects", "load_detections", "mdoc",
    "normalize_minmax", "overlap_metrics", "preprocess", "run_batch", "run_pipeline", "telea_inpaint",
]
