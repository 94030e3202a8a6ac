import os
import tempfile
import unittest

from lib.utils.errors import UnknownTaskError
from lib.utils.log_utils import configure_logging, log_error
from lib.utils.utilities import format_float, read_key_value_file, render_csv, write_csv_rows, write_text_file


class TestKeyValueFile(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "bench.conf")

    def tearDown(self):
        self.tmp.cleanup()

    def test_reads_pairs_and_skips_comments(self):
        write_text_file("# suite\nseed = 3\n\ntask_count=5\nmode=lora:2\n", self.path)
        self.assertEqual(read_key_value_file(self.path), {"seed": "3", "task_count": "5", "mode": "lora:2"})

    def test_line_without_equals_is_rejected(self):
        write_text_file("seed 3\n", self.path)
        with self.assertRaises(ValueError):
            read_key_value_file(self.path)


class TestReports(unittest.TestCase):

    def test_render_csv(self):
        self.assertEqual(render_csv(["a", "b"], [[1, "x,y"]]), 'a,b\n1,"x,y"\n')

    def test_write_csv_rows_creates_parent_dir(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "nested", "out.csv")
            write_csv_rows(["k"], [[1], [2]], path)
            with open(path, encoding="utf-8") as file:
                self.assertEqual(file.read(), "k\n1\n2\n")

    def test_format_float(self):
        self.assertEqual(format_float(0.5), "0.500000")
        self.assertEqual(format_float(None), "n/a")
        self.assertEqual(format_float(1 / 3, 2), "0.33")


class TestLogUtils(unittest.TestCase):

    def test_log_error_raises_domain_error(self):
        with self.assertLogs("lib.utils.log_utils", level="ERROR") as logs:
            with self.assertRaises(UnknownTaskError) as raised:
                log_error(UnknownTaskError, "task 9 is unknown", "decouple")
        self.assertEqual(raised.exception.context, "decouple")
        self.assertIn("UnknownTask in decouple: task 9 is unknown", logs.output[0])

    def test_invalid_level(self):
        with self.assertRaises(ValueError):
            configure_logging("LOUD")


if __name__ == '__main__':
    unittest.main()
