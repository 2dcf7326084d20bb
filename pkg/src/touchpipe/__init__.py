"""touchpipe: an optical multi-touch processing pipeline.

From raw grayscale frames to tracked, hand-attributed, finger-registered
touch points emitted as TUIO events over UDP. See README.md for the CLI and
file formats.
"""

from .image import BinaryMask, Image, Pixel, Rect, neighbors4, neighbors8, threshold
from .pipeline import FrameResult, Pipeline, PipelineConfig, run_replay

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "FrameResult",
    "Image",
    "Pipeline",
    "PipelineConfig",
    "Pixel",
    "Rect",
    "neighbors4",
    "neighbors8",
    "run_replay",
    "threshold",
    "__version__",
]
