"""
Helper functions for facestab: file formats, report writers, manifests, seeded generators and logging
"""
import csv
import hashlib
import json
import logging
import math
import os
import struct
from datetime import datetime, timezone

import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from models.dictionary import Dictionary
from models.errors import InputFormatError

logger = logging.getLogger(__name__)

FSTB_MAGIC = b"FSTB"
FSTV_MAGIC = b"FSTV"
_FSTB_HEADER = struct.Struct("<4sII")
_FSTV_HEADER = struct.Struct("<4sIII")
_FLOAT = np.dtype("<f8")

MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.json"


def make_rng(seed, index=None):
    """
    Counter-based generator for a seed, or for the (seed, index) stream of one trial

    Args:
        seed (int): 64-bit run seed
        index (int, optional): Trial or instance index

    Returns:
        numpy.random.Generator: Philox-backed generator
    """
    entropy = int(seed) if index is None else (int(seed), int(index))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def format_float(value):
    """17 significant digits; non-finite values as the literal tokens nan / inf / -inf"""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def read_matrix_csv(path):
    """
    Read a headerless numeric CSV file into a 2-D array

    Raises:
        InputFormatError: On unparsable cells or ragged rows, naming the line
    """
    rows = []
    width = None
    try:
        with open(path, newline='', encoding='utf-8') as f:
            for line_no, record in enumerate(csv.reader(f), start=1):
                if not record or all(not cell.strip() for cell in record):
                    continue
                try:
                    values = [float(cell) for cell in record]
                except ValueError as exc:
                    raise InputFormatError(path, f"not a number ({exc})", line=line_no) from exc
                if not all(math.isfinite(v) for v in values):
                    raise InputFormatError(path, "non-finite value", line=line_no)
                if width is None:
                    width = len(values)
                elif len(values) != width:
                    raise InputFormatError(path, f"expected {width} columns, got {len(values)}", line=line_no)
                rows.append(values)
    except OSError as exc:
        raise InputFormatError(path, f"cannot read file ({exc.strerror})") from exc
    if not rows:
        raise InputFormatError(path, "no data rows")
    return np.array(rows, dtype=float)


def read_dictionary_csv(path):
    """Dictionary from a CSV file with one atom per row"""
    return Dictionary.from_rows(read_matrix_csv(path))


def write_fstb(path, rows, values=None, block_size=0):
    """
    Write an M x d matrix in the FSTB binary format, optionally followed by a value section

    Layout: b"FSTB", u32 M, u32 d, M*d float64 LE row-major; then optionally
    b"FSTV", u32 rows, u32 d_v, u32 block_size and rows*d_v float64 LE.
    """
    rows = np.ascontiguousarray(rows, dtype=_FLOAT)
    with open(path, 'wb') as f:
        f.write(_FSTB_HEADER.pack(FSTB_MAGIC, rows.shape[0], rows.shape[1]))
        f.write(rows.tobytes())
        if values is not None:
            values = np.ascontiguousarray(values, dtype=_FLOAT)
            f.write(_FSTV_HEADER.pack(FSTV_MAGIC, values.shape[0], values.shape[1], int(block_size)))
            f.write(values.tobytes())
    return path


def read_fstb(path):
    """
    Read an FSTB file

    Returns:
        tuple: (rows M x d, values or None, block_size or 0)

    Raises:
        InputFormatError: Bad magic, truncated payload or trailing bytes, naming the byte offset
    """
    try:
        with open(path, 'rb') as f:
            blob = f.read()
    except OSError as exc:
        raise InputFormatError(path, f"cannot read file ({exc.strerror})") from exc

    if len(blob) < _FSTB_HEADER.size:
        raise InputFormatError(path, "truncated header", offset=len(blob))
    magic, m_count, dim = _FSTB_HEADER.unpack_from(blob, 0)
    if magic != FSTB_MAGIC:
        raise InputFormatError(path, f"bad magic {magic!r}", offset=0)
    if m_count < 1 or dim < 1:
        raise InputFormatError(path, f"empty matrix M={m_count} d={dim}", offset=4)
    rows, offset = _read_block(path, blob, _FSTB_HEADER.size, m_count, dim)

    values, block_size = None, 0
    if offset < len(blob):
        if len(blob) - offset < _FSTV_HEADER.size:
            raise InputFormatError(path, "truncated value header", offset=offset)
        magic, n_rows, value_dim, block_size = _FSTV_HEADER.unpack_from(blob, offset)
        if magic != FSTV_MAGIC:
            raise InputFormatError(path, f"bad value-section magic {magic!r}", offset=offset)
        if n_rows != m_count:
            raise InputFormatError(path, f"value rows {n_rows} != key rows {m_count}", offset=offset + 4)
        values, offset = _read_block(path, blob, offset + _FSTV_HEADER.size, n_rows, value_dim)
        if offset != len(blob):
            raise InputFormatError(path, "trailing bytes after value section", offset=offset)
    return rows, values, block_size


def _read_block(path, blob, start, n_rows, n_cols):
    end = start + n_rows * n_cols * _FLOAT.itemsize
    if end > len(blob):
        raise InputFormatError(path, f"expected {n_rows}x{n_cols} float64 payload, file ends early",
                               offset=len(blob))
    block = np.frombuffer(blob, dtype=_FLOAT, count=n_rows * n_cols, offset=start).reshape(n_rows, n_cols)
    bad = np.flatnonzero(~np.isfinite(block.reshape(-1)))
    if bad.size:
        raise InputFormatError(path, "non-finite value", offset=start + int(bad[0]) * _FLOAT.itemsize)
    return block.astype(float), end


def read_dictionary(path):
    """Dictionary from a CSV or FSTB file (sniffed by magic)"""
    with open(path, 'rb') as f:
        head = f.read(4)
    if head == FSTB_MAGIC:
        rows, _, _ = read_fstb(path)
        return Dictionary.from_rows(rows)
    return read_dictionary_csv(path)


def ensure_output_dir(path):
    """Create the output directory if needed and return its absolute path"""
    os.makedirs(path, exist_ok=True)
    return os.path.abspath(path)


def write_csv(path, rows, columns=None):
    """
    Write dict rows to a CSV file with a header line

    Args:
        path (str): Output file
        rows (list): Dicts sharing the same keys
        columns (list, optional): Header order, defaults to the keys of the first row

    Returns:
        str: The path written
    """
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in columns])
    return path


def to_jsonable(value):
    """Recursively convert numpy types and non-finite floats into JSON-safe values"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else format_float(value)
    if hasattr(value, 'value') and hasattr(value, 'name'):
        return value.value
    return value


def write_json(path, data):
    """Write data as indented JSON with sorted keys"""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def sha256_file(path):
    """Hex SHA-256 of a file's contents"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(output_dir, command, seed, parameters, artifacts):
    """
    Record seed, parameters and artifact checksums for one run

    Args:
        output_dir (str): Run directory
        command (str): Command name
        seed (int): Run seed
        parameters (dict): Resolved parameters
        artifacts (list): File names inside output_dir

    Returns:
        str: Path to manifest.json
    """
    manifest = {
        'command': command,
        'seed': seed,
        'parameters': parameters,
        'created_at': datetime.now(timezone.utc).isoformat(),
        'artifacts': {name: sha256_file(os.path.join(output_dir, name)) for name in sorted(artifacts)},
    }
    return write_json(os.path.join(output_dir, MANIFEST_NAME), manifest)


def setup_logging(level="INFO", quiet=False, console=None):
    """
    Route log records through a single rich handler

    Args:
        level (str): Log level name
        quiet (bool): Only warnings and errors
        console (rich.console.Console, optional): Console to log to (stderr by default)
    """
    handler = RichHandler(console=console or Console(stderr=True), show_path=False,
                          rich_tracebacks=True, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root = logging.getLogger()
    for existing in list(root.handlers):
        if isinstance(existing, RichHandler):
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(logging.WARNING if quiet else getattr(logging, str(level).upper(), logging.INFO))
    return handler
