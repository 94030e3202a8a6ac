import os
import struct
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lib.store import container as store
from lib.store.container import (
    MAGIC,
    Container,
    Section,
    content_hash,
    decode_container,
    encode_container,
    flat_from_container,
    flat_to_container,
    inspect_container,
    load_flat,
    save_flat,
)
from lib.store.tensor_store import flatten
from lib.utils.enums import ContainerKind, DType, SectionTag
from lib.utils.errors import BadMagicError, CorruptSectionError, IoError, UnsupportedVersionError


class TestContainerFile(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "delta.cdt")
        self.vec = flatten([("w", [2, 4], np.arange(8) * 0.25), ("b", [2], [-1.5, 3.0])])

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_load_round_trip(self):
        save_flat(self.vec, self.path)
        self.assertEqual(load_flat(self.path), self.vec)

    def test_header_layout(self):
        data = encode_container(flat_to_container(self.vec, ContainerKind.BASE_MODEL))
        self.assertEqual(data[:8], b"CONDUF01")
        self.assertEqual(struct.unpack_from("<IBI", data, 8), (1, 0, 2))
        tag, length = struct.unpack_from("<HQ", data, 17)
        self.assertEqual(tag, SectionTag.LAYOUT)

    def test_values_section_encoding(self):
        section = store.encode_values(flatten([("w", [2], [1.0, -2.0])], dtype=DType.r32))
        self.assertEqual(section.payload[0], 0)
        self.assertEqual(np.frombuffer(section.payload[1:], dtype="<f4").tolist(), [1.0, -2.0])

    def test_bad_magic(self):
        data = encode_container(flat_to_container(self.vec))
        with self.assertRaises(BadMagicError):
            decode_container(b"XXXXXXXX" + data[8:])

    def test_truncated_file(self):
        data = encode_container(flat_to_container(self.vec))
        with self.assertRaises(CorruptSectionError):
            decode_container(data[:-3])
        with self.assertRaises(CorruptSectionError):
            decode_container(data[:12])
        with self.assertRaises(CorruptSectionError):
            decode_container(b"CONDU")
        with self.assertRaises(CorruptSectionError):
            decode_container(b"")

    def test_checksum_mismatch(self):
        data = bytearray(encode_container(flat_to_container(self.vec)))
        data[-10] ^= 0xFF
        with self.assertRaises(CorruptSectionError):
            decode_container(bytes(data))

    def test_trailing_bytes(self):
        data = encode_container(flat_to_container(self.vec))
        with self.assertRaises(CorruptSectionError):
            decode_container(data + b"\x00")

    def test_unsupported_version(self):
        data = bytearray(encode_container(flat_to_container(self.vec)))
        data[8:12] = struct.pack("<I", 2)
        with self.assertRaises(UnsupportedVersionError):
            decode_container(bytes(data))

    def test_missing_file(self):
        with self.assertRaises(IoError):
            load_flat(os.path.join(self.tmp.name, "missing.cdt"))

    def test_values_without_layout(self):
        bare = Container(kind=ContainerKind.DELTA_MODEL, sections=(store.encode_values(self.vec),))
        with self.assertRaises(CorruptSectionError):
            flat_from_container(decode_container(encode_container(bare)))

    def test_identical_inputs_give_identical_bytes(self):
        again = flatten([("w", [2, 4], np.arange(8) * 0.25), ("b", [2], [-1.5, 3.0])])
        self.assertEqual(
            encode_container(flat_to_container(self.vec)),
            encode_container(flat_to_container(again)),
        )
        self.assertEqual(content_hash(self.vec), content_hash(again))
        self.assertEqual(len(content_hash(self.vec)), 32)

    def test_inspect(self):
        summary = inspect_container(flat_to_container(self.vec))
        self.assertEqual(summary["kind"], "DELTA_MODEL")
        self.assertEqual([s["tag"] for s in summary["sections"]], ["LAYOUT", "VALUES"])
        self.assertEqual(summary["layout"], [("w", [2, 4]), ("b", [2])])
        self.assertEqual(summary["total_len"], 10)


_names = st.text(alphabet="abcdefghijklmnopqrstuvwxyz_.0123456789", min_size=1, max_size=12)


@st.composite
def flat_vectors(draw):
    dtype = draw(st.sampled_from([DType.r32, DType.r64]))
    width = 32 if dtype == DType.r32 else 64
    shapes = draw(st.lists(
        st.tuples(_names, st.lists(st.integers(1, 5), min_size=0, max_size=3)),
        max_size=4,
        unique_by=lambda item: item[0],
    ))
    tensors = []
    for name, dims in shapes:
        size = int(np.prod(dims)) if dims else 1
        values = draw(st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=width), min_size=size, max_size=size
        ))
        tensors.append((name, dims, values))
    return flatten(tensors, dtype=dtype)


class TestContainerProperties(unittest.TestCase):

    @settings(max_examples=1000, deadline=None)
    @given(flat_vectors(), st.sampled_from(list(ContainerKind)))
    def test_round_trip_is_bit_exact(self, vec, kind):
        data = encode_container(flat_to_container(vec, kind))
        decoded = decode_container(data)
        self.assertEqual(decoded.kind, kind)
        restored = flat_from_container(decoded)
        self.assertEqual(restored.layout, vec.layout)
        self.assertEqual(restored.dtype, vec.dtype)
        self.assertEqual(restored.values.tobytes(), vec.values.tobytes())
        self.assertEqual(encode_container(decoded), data)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 0xFFFF), st.binary(max_size=64)), max_size=6))
    def test_arbitrary_sections_round_trip(self, sections):
        container = Container(
            kind=ContainerKind.PROTOTYPE_BUNDLE,
            sections=tuple(Section(tag=tag, payload=payload) for tag, payload in sections),
        )
        self.assertEqual(decode_container(encode_container(container)), container)

    def test_magic_constant(self):
        self.assertEqual(MAGIC, b"CONDUF01")


if __name__ == '__main__':
    unittest.main()
