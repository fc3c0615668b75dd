"""CSV artifacts of a run directory: manifests, logs, metrics and comparisons."""

import csv
import os
from threading import Lock
from typing import Any, Dict, List, Sequence

from utils.errors import DataFormatError, UsageError
from utils.logger import get_logger

logger = get_logger(__name__)

TMP_SUFFIX = '.tmp'


class CSVWriter:
    """
    Writes whole CSV tables into one output directory.

    Files are LF-terminated and replaced atomically, so an interrupted run
    leaves either the previous table or the new one, never a partial file.
    """

    def __init__(self, output_directory: str):
        """
        Initialize CSV writer.

        Args:
            output_directory: Directory the tables go to, created if missing
        """
        self.output_directory = output_directory
        self.lock = Lock()
        os.makedirs(output_directory, exist_ok=True)

    def write_table(self, filename: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
        """
        Write header plus rows, replacing any existing file.

        Args:
            filename: Output filename, relative to the output directory
            header: Column names
            rows: Data rows, each exactly as wide as the header

        Returns:
            Full path of the written file
        """
        for index, row in enumerate(rows):
            if len(row) != len(header):
                raise UsageError(
                    f"{filename}: row {index} has {len(row)} fields, header {','.join(header)} has {len(header)}"
                )

        path = self.get_file_path(filename)
        tmp_path = path + TMP_SUFFIX
        with self.lock:
            try:
                with open(tmp_path, 'w', newline='', encoding='utf-8') as f:
                    writer = csv.writer(f, lineterminator='\n')
                    writer.writerow(header)
                    writer.writerows(rows)
                os.replace(tmp_path, path)
            except OSError as e:
                logger.error(f"Error writing {path}: {e}")
                if os.path.exists(tmp_path):
                    os.remove(tmp_path)
                raise

        logger.debug(f"Wrote {len(rows)} rows to {path}")
        return path

    def get_file_path(self, filename: str) -> str:
        return os.path.join(self.output_directory, filename)


def read_rows(path: str, expected_header: Sequence[str]) -> List[Dict[str, str]]:
    """
    Read a CSV file whose header must match exactly.

    Args:
        path: CSV file
        expected_header: Required column names, in order

    Returns:
        One dict per data row
    """
    if not os.path.exists(path):
        raise DataFormatError(f"CSV file not found: {path}")

    with open(path, 'r', newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != list(expected_header):
            raise DataFormatError(
                f"{path}: expected header {','.join(expected_header)}, got {','.join(header or [])}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DataFormatError(f"{path}:{line_no}: expected {len(expected_header)} fields, got {len(row)}")
            rows.append(dict(zip(expected_header, row)))
    return rows
