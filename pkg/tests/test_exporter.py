"""CSV table writing and reading."""

import os

import pytest

from exporter import CSVWriter, read_rows
from utils.errors import DataFormatError, UsageError


def test_lf_terminated_and_replaced(tmp_path):
    writer = CSVWriter(str(tmp_path / 'out'))
    writer.write_table('t.csv', ['a', 'b'], [[1, 'x'], [2, 'y']])
    path = writer.write_table('t.csv', ['a', 'b'], [[3, 'z']])
    with open(path, 'rb') as f:
        assert f.read() == b"a,b\n3,z\n"
    assert not os.path.exists(path + '.tmp')


def test_row_width_checked(tmp_path):
    with pytest.raises(UsageError):
        CSVWriter(str(tmp_path)).write_table('t.csv', ['a', 'b'], [[1]])
    assert not os.path.exists(tmp_path / 't.csv')


def test_read_rows(tmp_path):
    path = CSVWriter(str(tmp_path)).write_table('t.csv', ['id', 'v'], [['a', '1'], ['b', '2']])
    assert read_rows(path, ['id', 'v']) == [{'id': 'a', 'v': '1'}, {'id': 'b', 'v': '2'}]


@pytest.mark.parametrize('content', [b"id,w\na,1\n", b"id,v\na\n", b""])
def test_read_rows_rejects(tmp_path, content):
    path = tmp_path / 't.csv'
    path.write_bytes(content)
    with pytest.raises(DataFormatError):
        read_rows(str(path), ['id', 'v'])
