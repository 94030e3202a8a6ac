import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lib.fusion.triggers import (
    MIB,
    PackedMask,
    TaskTrigger,
    decode_trigger,
    encode_trigger,
    expected_trigger_bytes,
    mask_apply,
    mask_bits_from_bool,
    pack,
    popcount,
    render_storage_report,
    storage_report,
    unpack,
)
from lib.store.container import Container, encode_container
from lib.store.tensor_store import flatten
from lib.utils.enums import ContainerKind, DType, ReportFormat
from lib.utils.errors import BadConfigError, LengthMismatchError


class TestPackedMask(unittest.TestCase):

    def test_bit_layout_is_lsb_first(self):
        mask = pack([1, 0, 1, 1])
        self.assertEqual(mask.bits, bytes([0b00001101]))
        self.assertEqual(mask.bit_len, 4)

    def test_all_zeros_length_nine(self):
        self.assertEqual(pack([0] * 9).bits, b"\x00\x00")

    def test_random_mask_round_trip(self):
        bits = np.random.default_rng(3).integers(0, 2, 10000)
        mask = pack(bits)
        self.assertEqual(len(mask.bits), 1250)
        np.testing.assert_array_equal(unpack(mask), bits)
        self.assertEqual(popcount(mask), int(bits.sum()))

    def test_non_binary_bits_rejected(self):
        with self.assertRaises(ValueError):
            pack([0, 2])

    def test_padding_bits_must_be_zero(self):
        with self.assertRaises(ValueError):
            PackedMask(bits=b"\xff", bit_len=4)
        with self.assertRaises(ValueError):
            PackedMask(bits=b"\x00\x00", bit_len=8)

    def test_bool_gate_matches_pack(self):
        gate = np.random.default_rng(4).random(77) > 0.5
        self.assertEqual(mask_bits_from_bool(gate), pack(gate.astype(int)))

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(0, 1), max_size=300))
    def test_pack_unpack_inverse(self, bits):
        mask = pack(bits)
        self.assertEqual(unpack(mask).tolist(), bits)
        self.assertEqual(len(mask.bits), (len(bits) + 7) // 8)
        self.assertLessEqual(popcount(mask), mask.bit_len)


class TestMaskApply(unittest.TestCase):

    def test_gate(self):
        out = mask_apply(pack([1, 0]), flatten([("w", [2], [3, -2])]))
        self.assertEqual(out.values.tolist(), [3.0, 0.0])

    def test_all_ones_is_identity(self):
        vec = flatten([("w", [5], [1, -2, 3, 0, 4])])
        self.assertEqual(mask_apply(pack([1] * 5), vec), vec)

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatchError):
            mask_apply(pack([1, 0, 1]), flatten([("w", [2], [3, -2])]))

    def test_matches_unpacked_loop(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            size = int(rng.integers(1, 200))
            bits = rng.integers(0, 2, size)
            values = rng.standard_normal(size)
            expected = [values[j] if bits[j] else 0.0 for j in range(size)]
            out = mask_apply(pack(bits), flatten([("w", [size], values)]))
            self.assertEqual(out.values.tolist(), expected)


class TestTriggerCodec(unittest.TestCase):

    def test_round_trip(self):
        trigger = TaskTrigger(mask=pack([1, 0, 1, 1, 0, 0, 0, 0, 1]), lam=0.6, task_id=3)
        section = encode_trigger(trigger)
        self.assertEqual(len(section.payload), 4 + 8 + 8 + 2)
        self.assertEqual(decode_trigger(section), trigger)

    def test_lambda_alias(self):
        trigger = TaskTrigger(mask=pack([1]), **{"lambda": 2.5}, task_id=0)
        self.assertEqual(trigger.lam, 2.5)

    def test_negative_or_infinite_lambda_rejected(self):
        with self.assertRaises(ValueError):
            TaskTrigger(mask=pack([1]), lam=-1.0, task_id=0)
        with self.assertRaises(ValueError):
            TaskTrigger(mask=pack([1]), lam=float("inf"), task_id=0)

    def test_serialized_size(self):
        bit_len = 12345
        trigger = TaskTrigger(mask=pack([1] * bit_len), lam=1.0, task_id=0)
        framed = encode_container(Container(kind=ContainerKind.SESSION_STATE, sections=(encode_trigger(trigger),)))
        self.assertEqual(len(framed) - 17, expected_trigger_bytes(bit_len))


class TestStorageReport(unittest.TestCase):

    def test_masks_for_eleven_tasks(self):
        param_count = round(570.86 * MIB / 4)
        report = storage_report(param_count, DType.r32, 11)
        masks_mb = report.mask_bytes_total / MIB
        self.assertAlmostEqual(report.dense_model_bytes / MIB, 570.86, places=4)
        self.assertLess(abs(masks_mb - 196.20) / 196.20, 0.0005)
        self.assertEqual(report.rescaler_bytes, 88)

    def test_mask_to_dense_ratio(self):
        self.assertEqual(storage_report(800, DType.r32, 3).mask_to_dense_ratio, 1 / 32)
        self.assertEqual(storage_report(800, DType.r64, 3).mask_to_dense_ratio, 1 / 64)

    def test_single_task(self):
        report = storage_report(8000, DType.r32, 1)
        self.assertEqual(report.condu_bytes, 32000 + 1000 + 8)
        self.assertEqual(report.individual_bytes, 32000)

    def test_savings_ratio(self):
        report = storage_report(8000, DType.r32, 10)
        self.assertAlmostEqual(report.savings_ratio, 320000 / (32000 + 10000 + 80))

    def test_low_rank_scenario(self):
        report = storage_report(8000, DType.r32, 4, lora_params=800)
        self.assertEqual(report.lora_unified_bytes, 3200)
        self.assertEqual(report.lora_mask_bytes_total, 400)
        self.assertEqual(report.lora_condu_with_base_bytes, 32000 + 3200 + 400 + 32)
        self.assertEqual(report.lora_individual_with_base_bytes, 32000 + 4 * 3200)

    def test_invalid_inputs(self):
        with self.assertRaises(BadConfigError):
            storage_report(0, DType.r32, 1)
        with self.assertRaises(BadConfigError):
            storage_report(10, DType.r32, 0)

    def test_rendering(self):
        report = storage_report(149620000, DType.r32, 11)
        text = render_storage_report(report)
        self.assertIn("196.20 MB", text)
        self.assertIn("one float64 per task", text)
        csv_text = render_storage_report(report, ReportFormat.csv)
        self.assertTrue(csv_text.startswith("item,value\n"))
        self.assertIn("masks,196.20 MB", csv_text)


if __name__ == '__main__':
    unittest.main()
