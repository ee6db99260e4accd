import flatpack.mesh as mesh
import flatpack.mesh_file as mesh_file
import flatpack.packing as packing

from unittest import TestCase
import unittest

import json
import tempfile

import numpy as np

import logging
import os

logging.basicConfig(filename=f"{os.getcwd()}/flatpack_unittest.log")


def _hex_document(n=4):
    T, embedding = mesh.hex_torus(n)
    lengths = embedding.flat_lengths(T)
    fitted = packing.fit_uniform_packing(T, packing.EdgeLengths(lengths), 0.5)

    return mesh_file.MeshDocument(
        T, fitted.rho, fitted.cos_theta, lengths, embedding
    )


class MeshDocumentTest(TestCase):
    def test_to_dict(self):
        document = _hex_document()
        doc = document.to_dict()

        self.assertEqual(doc["version"], mesh_file.FORMAT_VERSION)
        self.assertEqual(doc["num_vertices"], 16)
        self.assertEqual(len(doc["triangles"]), 32)
        self.assertEqual(len(doc["cos_theta"]), 48)

        for record in doc["lengths"]:
            i, j = record["edge"]
            self.assertLess(i, j)

    def test_from_dict(self):
        document = _hex_document()
        restored = mesh_file.MeshDocument.from_dict(document.to_dict())

        self.assertEqual(restored.triangulation, document.triangulation)
        np.testing.assert_array_equal(restored.rho, document.rho)
        np.testing.assert_array_equal(restored.cos_theta, document.cos_theta)
        np.testing.assert_array_equal(restored.lengths, document.lengths)
        np.testing.assert_array_equal(
            restored.embedding.positions, document.embedding.positions
        )

    def test_records_in_any_order(self):
        doc = _hex_document().to_dict()
        expected = mesh_file.MeshDocument.from_dict(doc).lengths
        doc["lengths"] = doc["lengths"][::-1]

        np.testing.assert_array_equal(
            mesh_file.MeshDocument.from_dict(doc).lengths, expected
        )

    def test_packing(self):
        document = _hex_document()

        self.assertIsInstance(document.packing, packing.CirclePacking)

        document.rho = None
        self.assertIsNone(document.packing)

    def test_edge_lengths(self):
        T, embedding = mesh.hex_torus(4)
        document = mesh_file.MeshDocument(T, embedding=embedding)

        np.testing.assert_array_equal(
            document.edge_lengths.values, embedding.flat_lengths(T)
        )

        document.lengths = np.full(T.num_edges, 2.0)
        self.assertEqual(document.edge_lengths.size, 2.0)

        self.assertIsNone(mesh_file.MeshDocument(T).edge_lengths)

    def test_optional_fields(self):
        T = mesh.seven_vertex_torus()
        doc = mesh_file.MeshDocument(T).to_dict()

        self.assertEqual(set(doc), {"version", "num_vertices", "triangles"})

        restored = mesh_file.MeshDocument.from_dict(doc)
        self.assertIsNone(restored.rho)
        self.assertIsNone(restored.embedding)
        self.assertIn("fields=[]", repr(restored))


class FormatErrorTest(TestCase):
    def setUp(self):
        self.doc = _hex_document().to_dict()

    def assertFormatError(self, doc):
        with self.assertRaises(mesh_file.MeshFormatError):
            mesh_file.MeshDocument.from_dict(doc)

    def test_version(self):
        self.doc["version"] = 2
        self.assertFormatError(self.doc)

        del self.doc["version"]
        self.assertFormatError(self.doc)

    def test_missing_keys(self):
        del self.doc["triangles"]
        self.assertFormatError(self.doc)

        self.assertFormatError([1, 2, 3])

    def test_bad_triangles(self):
        self.doc["triangles"][0] = [0, 1, 99]
        self.assertFormatError(self.doc)

    def test_rho_size(self):
        self.doc["rho"] = self.doc["rho"][:-1]
        self.assertFormatError(self.doc)

    def test_edge_order(self):
        record = self.doc["cos_theta"][0]
        record["edge"] = record["edge"][::-1]
        self.assertFormatError(self.doc)

    def test_unknown_edge(self):
        self.doc["lengths"][0]["edge"] = [0, 10]
        self.assertFormatError(self.doc)

    def test_duplicate_edge(self):
        self.doc["lengths"][1] = dict(self.doc["lengths"][0])
        self.assertFormatError(self.doc)

    def test_missing_edge(self):
        self.doc["lengths"] = self.doc["lengths"][1:]
        self.assertFormatError(self.doc)

    def test_malformed_record(self):
        self.doc["lengths"][0] = {"edge": [0, 1]}
        self.assertFormatError(self.doc)

    def test_embedding(self):
        doc = dict(self.doc)
        del doc["lattice"]
        self.assertFormatError(doc)

        doc = dict(self.doc)
        doc["positions"] = doc["positions"][:-1]
        self.assertFormatError(doc)

        doc = dict(self.doc)
        doc["lattice"] = [[2.0, 0.0], [0.0, 2.0]]
        self.assertFormatError(doc)

    def test_topology(self):
        T = mesh.Triangulation([(0, 1, 2)], 3)
        doc = mesh_file.MeshDocument(T).to_dict()

        with self.assertRaises(mesh.NonManifoldEdgeError):
            mesh_file.MeshDocument.from_dict(doc)

        restored = mesh_file.MeshDocument.from_dict(doc, validate=False)
        self.assertEqual(restored.triangulation.num_faces, 1)


class FileTest(TestCase):
    def test_save_load(self):
        document = _hex_document(5)

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "mesh.json")
            mesh_file.save_mesh(path, document)
            restored = mesh_file.load_mesh(path)

        self.assertEqual(restored.triangulation, document.triangulation)
        np.testing.assert_array_equal(restored.lengths, document.lengths)

    def test_bad_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "mesh.json")

            with open(path, "w") as f:
                f.write("{not json")

            with self.assertRaises(mesh_file.MeshFormatError):
                mesh_file.load_mesh(path)

            with open(path, "w") as f:
                json.dump({"version": 1}, f)

            with self.assertRaises(mesh_file.MeshFormatError):
                mesh_file.load_mesh(path)

    def test_missing_file(self):
        with self.assertRaises(OSError):
            mesh_file.load_mesh("/nonexistent/flatpack/mesh.json")


if __name__ == "__main__":
    unittest.main()
