"""CSV export of run artifacts."""

from .writer import CSVWriter, read_rows

__all__ = ['CSVWriter', 'read_rows']
