"""Few-shot nucleus instance segmentation toolkit.

Structural label conversion, prototype-guided mask heads, marker-guided
watershed instance extraction, episode sampling, fine-tuning and the full
instance-segmentation metric suite.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DegeneratePrototypeError,
    DimensionError,
    EmptyMaskError,
    InconsistentMarkerError,
    InsufficientDataError,
    MalformedLabelError,
    MissingClassError,
    RegistryError,
    SgfsisError,
    UnsupportedGraphError,
)
from .labels import InstanceLabelMap, StructuralChannels, convert_labels  # noqa: F401
from .ops import ConvParams  # noqa: F401
from .watershed import derive_markers, fuse_instance_class, watershed_segment  # noqa: F401
