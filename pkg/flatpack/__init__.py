"""`flatpack` computes discrete uniformization factors of circle packings on
triangulated tori and measures how they converge to the smooth factor.

.. include:: substitutions.rst

The main classes and functions are imported into the package-level
namespace:
+   |Triangulation| and |VertexEmbedding|
+   |CirclePacking| and |ConformalFactor|
+   the solvers of :py:mod:`flatpack.uniformize`
+   |Settings| and |Param|

Please see their respective documentation for details on usage, or check out
the |flatpack| :doc:`quickstart` guide.
"""
import logging

from .mesh import (
    Triangulation,
    VertexEmbedding,
    build_triangulation,
    hex_torus,
    seven_vertex_torus,
    validate,
)
from .packing import (
    CirclePacking,
    ConformalFactor,
    EdgeLengths,
    check_regularity,
    fit_uniform_packing,
    packing_curvature,
)
from .param import FlatpackError, FlatpackWarning, Param, Settings
from .uniformize import (
    continuation_flow,
    newton_uniformize,
    normalize_area,
)


# Initialize logging with a NullHandler to let user decide on a handler if they
# so choose.
logging.getLogger(__name__).addHandler(logging.NullHandler())
