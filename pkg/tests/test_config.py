import os
import tempfile
import unittest

from lib.harness.config import BenchmarkConfig, TrainMode, load_benchmark_config
from lib.utils.enums import TrainModeKind
from lib.utils.errors import BadConfigError


class TestTrainMode(unittest.TestCase):

    def test_parse(self):
        self.assertEqual(TrainMode.parse("full").kind, TrainModeKind.full)
        mode = TrainMode.parse(" LoRA:4 ")
        self.assertEqual((mode.kind, mode.rank), (TrainModeKind.low_rank, 4))
        self.assertEqual(str(mode), "lora:4")

    def test_parse_rejects(self):
        for text in ("lora", "lora:x", "lora:0", "adapter"):
            with self.assertRaises(ValueError):
                TrainMode.parse(text)


class TestBenchmarkConfig(unittest.TestCase):

    def test_defaults(self):
        config = BenchmarkConfig()
        self.assertEqual((config.seed, config.task_count, config.feature_dim, config.class_count), (1, 5, 64, 4))
        self.assertEqual(config.spread, 0.5)
        self.assertEqual(config.k, 4)
        self.assertEqual(config.samples_per_class, 50)

    def test_few_shot_overrides_train_size(self):
        self.assertEqual(BenchmarkConfig(few_shot=8).samples_per_class, 8)

    def test_task_order(self):
        config = load_benchmark_config(overrides={"task_count": 3, "task_order": "2,0,1"})
        self.assertEqual(config.task_order, [2, 0, 1])
        with self.assertRaises(BadConfigError):
            load_benchmark_config(overrides={"task_count": 3, "task_order": "0,0,1"})

    def test_unknown_key(self):
        with self.assertRaises(BadConfigError):
            load_benchmark_config(overrides={"tasks": 3})

    def test_file_then_overrides(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "suite.conf")
            with open(path, "w") as file:
                file.write("# suite\nseed = 3\ntask_count=4\nmode=lora:2\ntask_agnostic=true\n")
            config = load_benchmark_config(path, overrides={"seed": 9, "spread": None})
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.task_count, 4)
        self.assertEqual(config.mode, TrainMode.parse("lora:2"))
        self.assertTrue(config.task_agnostic)
        self.assertEqual(config.spread, 0.5)

    def test_malformed_file(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "suite.conf")
            with open(path, "w") as file:
                file.write("seed\n")
            with self.assertRaises(BadConfigError):
                load_benchmark_config(path)

    def test_missing_file(self):
        with self.assertRaises(BadConfigError):
            load_benchmark_config("/nonexistent/suite.conf")


if __name__ == '__main__':
    unittest.main()
