"""Ruelle resonances and dynamical determinants of expanding circle maps
in Denjoy-Carleman classes."""

__version__ = "0.1.0"

from .circle_map import CircleMap, TrigPoly, flat_trace, periodic_points  # noqa: E402
from .dc_class import make_sequence, weight_w  # noqa: E402
from .determinant import det_series_from_traces, resonances  # noqa: E402
from .transfer_op import assemble_matrix  # noqa: E402

__all__ = ["CircleMap", "TrigPoly", "flat_trace", "periodic_points", "make_sequence", "weight_w",
           "det_series_from_traces", "resonances", "assemble_matrix", "__version__"]
