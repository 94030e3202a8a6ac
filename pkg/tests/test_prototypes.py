import struct
import unittest

import numpy as np

from lib.routing.prototypes import (
    PrototypeSet,
    bundle_from_container,
    bundle_to_container,
    compute_prototypes,
    decode_prototypes,
    encode_prototypes,
    group_by_label,
)
from lib.store.container import Section, decode_container, encode_container
from lib.utils.enums import SectionTag
from lib.utils.errors import CorruptSectionError, DimMismatchError, EmptyCategoryError, ZeroVectorError


class TestComputePrototypes(unittest.TestCase):

    def test_text_plus_image_mean(self):
        prototypes = compute_prototypes({"cat": [[1, 0], [0, 1]]}, {"cat": [1, 1]})
        self.assertEqual(prototypes.labels, ("cat",))
        self.assertEqual(prototypes.vectors.tolist(), [[1.5, 1.5]])

    def test_zero_prototype_rejected(self):
        with self.assertRaises(ZeroVectorError):
            compute_prototypes({"a": [[-1, 2]]}, {"a": [1, -2]})

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(31)
        images = {str(k): rng.standard_normal((5, 7)) for k in range(3)}
        texts = {str(k): rng.standard_normal(7) for k in range(3)}
        prototypes = compute_prototypes(images, texts, task_id=2)
        for row, label in enumerate(prototypes.labels):
            total = np.zeros(7)
            for image in images[label]:
                total += image
            expected = texts[label] + total / 5
            np.testing.assert_allclose(prototypes.vectors[row], expected, rtol=1e-6, atol=1e-6)
        self.assertEqual(prototypes.task_id, 2)

    def test_empty_category(self):
        with self.assertRaises(EmptyCategoryError):
            compute_prototypes({"a": []}, {"a": [1, 0]})
        with self.assertRaises(EmptyCategoryError):
            compute_prototypes({}, {})
        with self.assertRaises(EmptyCategoryError):
            compute_prototypes({"a": [[1, 0]]}, {})

    def test_dim_mismatch(self):
        with self.assertRaises(DimMismatchError):
            compute_prototypes({"a": [[1, 0, 0]]}, {"a": [1, 0]})
        with self.assertRaises(DimMismatchError):
            compute_prototypes({"a": [[1, 0]], "b": [[1, 0, 1]]}, {"a": [1, 0], "b": [0, 1, 1]})

    def test_group_by_label(self):
        features = np.arange(8.0).reshape(4, 2)
        groups = group_by_label(features, [1, 0, 1, 0])
        self.assertEqual(list(groups), ["0", "1"])
        self.assertEqual(groups["1"].tolist(), [[0.0, 1.0], [4.0, 5.0]])


class TestPrototypeCodec(unittest.TestCase):

    def test_round_trip(self):
        prototypes = PrototypeSet(task_id=4, labels=("dog", "chat"), vectors=[[1.25, -2.0, 0.5], [0.0, 3.0, 1.0]])
        section = encode_prototypes(prototypes)
        self.assertEqual(len(section.payload), 12 + 2 * (2 + 12) + 3 + 4)
        self.assertEqual(decode_prototypes(section), prototypes)

    def test_empty_slot(self):
        self.assertIsNone(decode_prototypes(encode_prototypes(None, 3)))

    def test_zero_width_vectors_are_corrupt(self):
        payload = struct.pack("<III", 0, 1, 0) + struct.pack("<H", 1) + b"a"
        with self.assertRaises(CorruptSectionError):
            decode_prototypes(Section(tag=SectionTag.PROTOTYPES, payload=payload))

    def test_non_finite_vectors_are_corrupt(self):
        vector = np.array([1.0, np.nan], dtype="<f4").tobytes()
        payload = struct.pack("<III", 0, 1, 2) + struct.pack("<H", 1) + b"a" + vector
        with self.assertRaises(CorruptSectionError):
            decode_prototypes(Section(tag=SectionTag.PROTOTYPES, payload=payload))

    def test_bundle(self):
        prototypes = PrototypeSet(task_id=0, labels=("a",), vectors=[[1.0, 2.0]])
        data = encode_container(bundle_to_container([prototypes, None]))
        self.assertEqual(bundle_from_container(decode_container(data)), [prototypes, None])


if __name__ == '__main__':
    unittest.main()
