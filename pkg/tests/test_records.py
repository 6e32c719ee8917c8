"""
Tests for result records and report tables.
"""
import pandas as pd
import pytest

from exceptions import DataFileError, InputValidationError
from models.results import TestResult
from models.site_data import SampleFlow
from utils.records import (
    format_record,
    format_sample_flow,
    format_table,
    parse_record,
    parse_records,
    read_records,
    write_frame,
    write_records,
)


@pytest.fixture
def result():
    return TestResult(
        theta_hat=0.012345678901234567,
        se=0.006,
        p_value=0.04550026389635842,
        n=18189,
        n_eff=17920,
        n_trimmed=269,
        epsilon=0.05,
        folds=5,
        seed=2024,
        mode='cate',
        kish_n_eff=17011.25,
        per_site_diagnostics={'IT': -0.031, 'UK': 0.1 / 3},
        site_labels=('IT', 'UK'),
    )


class TestRecords:
    """key=value serialization."""

    def test_round_trip_is_exact(self, result):
        assert parse_record(format_record(result)) == result

    def test_record_lines(self, result):
        lines = format_record(result).splitlines()
        assert lines[0].startswith('theta_hat=0.01234567890123456')
        assert 'K=5' in lines
        assert 'site.2=UK' in lines

    def test_multiple_blocks(self, result, tmp_path):
        other = TestResult(
            theta_hat=-1.5, se=0.5, p_value=0.0027, n=100, n_eff=90, n_trimmed=10,
            epsilon=0.1, folds=2, seed=1, mode='did', kish_n_eff=80.0, site_labels=('1', '2'),
        )
        path = write_records([result, other], tmp_path / 'out' / 'record.txt')
        assert path.read_text().count('\n\n') == 1
        assert read_records(path) == [result, other]

    def test_extra_blank_lines_tolerated(self, result):
        text = '\n\n' + format_record(result) + '\n\n\n' + format_record(result)
        assert len(parse_records(text)) == 2

    def test_missing_field(self, result):
        text = '\n'.join(line for line in format_record(result).splitlines()
                         if not line.startswith('se='))
        with pytest.raises(InputValidationError, match='se'):
            parse_record(text)

    def test_malformed_line(self):
        with pytest.raises(InputValidationError):
            parse_record('theta_hat 0.1')

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DataFileError):
            read_records(tmp_path / 'none.txt')


class TestTables:
    """Human-readable output."""

    def test_result_table(self, result):
        table = format_table(result)
        assert 'p_value' in table
        assert '0.0455' in table
        assert 'mean DD [site UK]' in table

    def test_sample_flow(self):
        flow = SampleFlow(rows_in=120)
        flow.record('drop rows with missing required fields', 110)
        flow.record('drop sites with fewer than 50 rows', 100)
        flow.dropped_sites.append('FR')
        lines = format_sample_flow(flow).splitlines()
        assert lines[0].startswith('input rows')
        assert lines[0].endswith('120')
        assert lines[-1] == 'dropped sites: FR'

    def test_write_frame(self, tmp_path):
        frame = pd.DataFrame({'scenario': ['a'], 'N': [500]})
        path = write_frame(frame, tmp_path / 'summary.csv')
        assert pd.read_csv(path).equals(frame)
