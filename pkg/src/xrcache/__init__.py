"""Coded caching for multi-user extended reality: codec, placement, delivery,
MISO physical layer, XR geometry, shared-cache dynamics and experiments."""

from .codec import CodecError, FileLibrary, split_file, xor_combine
from .delivery import (DecodeError, ResidualInterferenceError, build_schedule_bit_level,
                       build_schedule_signal_level, build_schedule_single_antenna,
                       decode_bit_level, decode_signal_level, dump_schedule, link_load)
from .placement import (PlacementSpec, UnsupportedParameterError, grouped_placement,
                        location_dependent_allocation, mn_placement)

__version__ = "0.1.0"
