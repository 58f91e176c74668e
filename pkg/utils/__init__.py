"""
Utils package for facestab
"""

from utils.helpers import (
    make_rng,
    format_float,
    read_matrix_csv,
    read_dictionary_csv,
    read_dictionary,
    read_fstb,
    write_fstb,
    ensure_output_dir,
    write_csv,
    write_json,
    write_manifest,
    sha256_file,
    setup_logging
)

__all__ = [
    'make_rng',
    'format_float',
    'read_matrix_csv',
    'read_dictionary_csv',
    'read_dictionary',
    'read_fstb',
    'write_fstb',
    'ensure_output_dir',
    'write_csv',
    'write_json',
    'write_manifest',
    'sha256_file',
    'setup_logging'
]
