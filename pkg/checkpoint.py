"""
Checkpoint Storage
Textual manifest (names, shapes, byte offsets) plus one little-endian float32 blob
"""

import logging
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from errors import LoadError, ReportError

logger = logging.getLogger(__name__)

FORMAT_HEADER = "# ddipnet checkpoint v1"
BLOB_DTYPE = np.dtype('<f4')

PathLike = Union[str, Path]


def _paths(stem: PathLike) -> Tuple[Path, Path]:
    stem = Path(stem)
    return stem.with_suffix('.manifest'), stem.with_suffix('.bin')


def save_checkpoint(stem: PathLike, tensors: Dict[str, np.ndarray], meta: Dict[str, str] = None) -> Tuple[Path, Path]:
    """Write <stem>.manifest and <stem>.bin; tensor order is preserved"""
    manifest_path, blob_path = _paths(stem)
    lines = [FORMAT_HEADER]
    for key, value in (meta or {}).items():
        if not key or any(ch.isspace() for ch in key):
            raise ReportError(f"checkpoint meta key must be a single token, got '{key}'")
        if '\n' in str(value):
            raise ReportError(f"checkpoint meta value for '{key}' spans lines")
        lines.append(f"meta {key} {value}")

    offset = 0
    chunks = []
    for name, array in tensors.items():
        if not name or any(ch.isspace() for ch in name):
            raise ReportError(f"tensor name must be a single token, got '{name}'")
        data = np.ascontiguousarray(array, dtype=BLOB_DTYPE)
        shape = ','.join(str(d) for d in data.shape)
        lines.append(f"tensor {name} shape={shape} offset={offset} count={data.size}")
        chunk = data.tobytes()
        chunks.append(chunk)
        offset += len(chunk)

    try:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        blob_path.write_bytes(b''.join(chunks))
    except OSError as e:
        raise ReportError(f"cannot write checkpoint {manifest_path}: {e}") from e

    logger.debug(f"Saved checkpoint {manifest_path} ({len(tensors)} tensors, {offset} bytes)")
    return manifest_path, blob_path


def load_checkpoint(stem: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, str]]:
    """Read a checkpoint back bit-exactly; returns (tensors, meta)"""
    manifest_path, blob_path = _paths(stem)
    try:
        lines = manifest_path.read_text(encoding='utf-8').splitlines()
        blob = blob_path.read_bytes()
    except OSError as e:
        raise LoadError(f"cannot read checkpoint: {e}", path=str(manifest_path)) from e

    if not lines or lines[0] != FORMAT_HEADER:
        raise LoadError("not a checkpoint manifest", path=str(manifest_path))

    tensors: Dict[str, np.ndarray] = {}
    meta: Dict[str, str] = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        kind, _, rest = line.partition(' ')
        if kind == 'meta':
            key, _, value = rest.partition(' ')
            meta[key] = value
        elif kind == 'tensor':
            try:
                name, shape_field, offset_field, count_field = rest.split(' ')
                shape_text = shape_field.split('=', 1)[1]
                shape = tuple(int(d) for d in shape_text.split(',')) if shape_text else ()
                offset = int(offset_field.split('=', 1)[1])
                count = int(count_field.split('=', 1)[1])
            except (ValueError, IndexError) as e:
                raise LoadError(f"malformed tensor line {number}: {line!r}", path=str(manifest_path)) from e
            end = offset + count * BLOB_DTYPE.itemsize
            if end > len(blob) or int(np.prod(shape, dtype=np.int64)) != count:
                raise LoadError(f"tensor '{name}' does not fit the blob", path=str(blob_path))
            tensors[name] = np.frombuffer(blob, dtype=BLOB_DTYPE, count=count, offset=offset).reshape(shape).astype(np.float32)
        else:
            raise LoadError(f"unknown manifest entry on line {number}: {line!r}", path=str(manifest_path))

    return tensors, meta
