"""Reading and writing meshes as JSON documents (format version 1).

.. code-block:: text

    {
        "version": 1,
        "num_vertices": 49,
        "triangles": [[0, 1, 7], ...],
        "rho": [...],                                  (optional)
        "cos_theta": [{"edge": [i, j], "value": c}],   (optional)
        "lengths": [{"edge": [i, j], "value": l}],     (optional)
        "positions": [[x, y], ...],                    (optional)
        "lattice": [[a, b], [c, d]]                    (optional)
    }

Edge records always use ``i < j``. Per-edge records, when present, must
cover every edge of the triangulation exactly once.
"""
from typing import Any, Dict, Optional

import json
import logging

import numpy as np

from .mesh import (
    MeshError,
    Triangulation,
    VertexEmbedding,
    build_triangulation,
)
from .packing import CirclePacking, EdgeLengths
from .param import FlatpackError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class MeshFormatError(FlatpackError):
    pass


def _format_error(msg: str):
    logger.error(msg)
    raise MeshFormatError(msg)


class MeshDocument:
    """A triangulation plus whatever per-vertex and per-edge data a mesh
    file carried.

    Attributes
    ----------
    triangulation : |Triangulation|

    rho : :py:class:`numpy.ndarray` or ``None``
        Logarithmic radii, shape ``(V,)``.

    cos_theta : :py:class:`numpy.ndarray` or ``None``
        Conformal weight cosines in edge order, shape ``(E,)``.

    lengths : :py:class:`numpy.ndarray` or ``None``
        Edge lengths in edge order, shape ``(E,)``.

    embedding : |VertexEmbedding| or ``None``
    """

    def __init__(
        self,
        triangulation: Triangulation,
        rho=None,
        cos_theta=None,
        lengths=None,
        embedding: Optional[VertexEmbedding] = None,
    ):
        self.triangulation = triangulation
        self.rho = None if rho is None else np.asarray(rho, dtype=float)
        self.cos_theta = (
            None if cos_theta is None else np.asarray(cos_theta, dtype=float)
        )
        self.lengths = (
            None if lengths is None else np.asarray(lengths, dtype=float)
        )
        self.embedding = embedding

    def __repr__(self):
        present = [
            name
            for name in ("rho", "cos_theta", "lengths", "embedding")
            if getattr(self, name) is not None
        ]
        return f"MeshDocument({self.triangulation!r}, fields={present})"

    @property
    def packing(self) -> Optional[CirclePacking]:
        """The circle packing, when both ``rho`` and ``cos_theta`` are set."""
        if self.rho is None or self.cos_theta is None:
            return None

        return CirclePacking(self.rho, self.cos_theta)

    @property
    def edge_lengths(self) -> Optional[EdgeLengths]:
        """Stored lengths, else the flat lengths of the embedding."""
        if self.lengths is not None:
            return EdgeLengths(self.lengths)

        if self.embedding is not None:
            return EdgeLengths(self.embedding.flat_lengths(self.triangulation))

        return None

    def to_dict(self) -> Dict[str, Any]:
        T = self.triangulation
        doc = {
            "version": FORMAT_VERSION,
            "num_vertices": T.num_vertices,
            "triangles": T.triangles.tolist(),
        }

        if self.rho is not None:
            doc["rho"] = self.rho.tolist()

        for name in ("cos_theta", "lengths"):
            values = getattr(self, name)

            if values is not None:
                doc[name] = [
                    {"edge": [int(i), int(j)], "value": float(v)}
                    for (i, j), v in zip(T.edges, values)
                ]

        if self.embedding is not None:
            doc["positions"] = self.embedding.positions.tolist()
            doc["lattice"] = self.embedding.lattice.tolist()

        return doc

    @classmethod
    def from_dict(cls, doc: Dict[str, Any], validate: bool = True):
        """Parses a decoded JSON document.

        With ``validate`` the triangulation must be a valid torus (see
        :py:func:`~flatpack.mesh.build_triangulation`); without it only the
        indices are checked, so broken meshes can still be inspected.

        Raises
        ------
        :py:class:`MeshFormatError`
            For a wrong version, missing keys, malformed edge records or array
            sizes that do not match the mesh.
        """
        if not isinstance(doc, dict):
            _format_error("A mesh document must be a JSON object.")

        if doc.get("version") != FORMAT_VERSION:
            _format_error(
                f"Unsupported mesh format version {doc.get('version')!r}."
            )

        for key in ("num_vertices", "triangles"):
            if key not in doc:
                _format_error(f"Mesh document is missing {key!r}.")

        try:
            if validate:
                T = build_triangulation(doc["triangles"], doc["num_vertices"])

            else:
                T = Triangulation(doc["triangles"], doc["num_vertices"])

        except (ValueError, TypeError) as e:
            _format_error(f"Bad triangle list: {e}")

        rho = doc.get("rho")

        if rho is not None and len(rho) != T.num_vertices:
            _format_error(
                f"'rho' has {len(rho)} entries for {T.num_vertices} vertices."
            )

        cos_theta = _read_edge_records(T, doc, "cos_theta")
        lengths = _read_edge_records(T, doc, "lengths")

        embedding = None

        if ("positions" in doc) != ("lattice" in doc):
            _format_error("'positions' and 'lattice' must appear together.")

        if "positions" in doc:
            if len(doc["positions"]) != T.num_vertices:
                _format_error("'positions' must have one point per vertex.")

            try:
                embedding = VertexEmbedding(doc["positions"], doc["lattice"])

            except MeshError as e:
                _format_error(f"Bad embedding: {e}")

        return cls(T, rho, cos_theta, lengths, embedding)


def _read_edge_records(
    triangulation: Triangulation, doc: Dict[str, Any], key: str
) -> Optional[np.ndarray]:
    records = doc.get(key)

    if records is None:
        return None

    values = np.full(triangulation.num_edges, np.nan)

    for record in records:
        try:
            i, j = (int(v) for v in record["edge"])
            value = float(record["value"])

        except (KeyError, TypeError, ValueError):
            _format_error(f"Malformed {key!r} record {record!r}.")

        if not i < j:
            _format_error(f"{key!r} edge key {[i, j]} must satisfy i < j.")

        try:
            e = triangulation.edge_id(i, j)

        except KeyError:
            _format_error(f"{key!r} names {[i, j]}, which is not an edge.")

        if not np.isnan(values[e]):
            _format_error(f"{key!r} lists edge {[i, j]} twice.")

        values[e] = value

    if np.isnan(values).any():
        missing = int(np.isnan(values).sum())
        _format_error(f"{key!r} is missing {missing} edge(s).")

    return values


def load_mesh(path: str, validate: bool = True) -> MeshDocument:
    """Reads a mesh file. See :py:meth:`MeshDocument.from_dict`."""
    try:
        with open(path) as f:
            doc = json.load(f)

    except json.JSONDecodeError as e:
        _format_error(f"{path} is not valid JSON: {e}")

    logger.debug(f"Loaded mesh document from {path}")

    return MeshDocument.from_dict(doc, validate=validate)


def save_mesh(path: str, document: MeshDocument):
    with open(path, "w") as f:
        json.dump(document.to_dict(), f, indent=1)

    logger.info(f"Wrote mesh to {path}")
