"""
Forest container and confidence-image files.

Forest layout: magic, uint32 version, uint32 header length, JSON header,
then for every tree its node and leaf tables as raw little-endian arrays in
a fixed order. The same forest always serializes to the same bytes.
"""

import json
import logging
import struct
from pathlib import Path

import numpy as np

from core.exceptions import FormatError
from core.geometry.io import read_pfm_planes, write_pfm_planes
from .types import ConfidenceForest, ConfidenceImage, ForestConfig, Tree

logger = logging.getLogger(__name__)

MAGIC = b'VFFOREST'
VERSION = 1

_TABLES = (
    ('kind', '<i1'),
    ('offsets', '<i1'),
    ('channels', '<i1'),
    ('threshold', '<f8'),
    ('children', '<i4'),
    ('leaf', '<i4'),
    ('class_counts', '<i8'),
    ('bin_counts', '<i8'),
)


def forest_to_bytes(forest: ConfidenceForest) -> bytes:
    header = {
        'config': forest.config.as_dict(),
        'bins': forest.bins,
        'gamma_max': forest.gamma_max,
        'trees': [
            {'nodes': tree.n_nodes, 'leaves': tree.n_leaves, 'binned': tree.bin_counts is not None}
            for tree in forest.trees
        ],
    }
    encoded = json.dumps(header, sort_keys=True).encode('utf-8')
    chunks = [MAGIC, struct.pack('<II', VERSION, len(encoded)), encoded]
    for tree in forest.trees:
        for name, dtype in _TABLES:
            table = getattr(tree, name)
            if table is not None:
                chunks.append(np.ascontiguousarray(table, dtype=dtype).tobytes())
    return b''.join(chunks)


def forest_from_bytes(data: bytes) -> ConfidenceForest:
    if not data.startswith(MAGIC):
        raise FormatError("not a forest file")
    offset = len(MAGIC)
    version, length = struct.unpack_from('<II', data, offset)
    if version != VERSION:
        raise FormatError(f"unsupported forest version {version}")
    offset += 8
    header = json.loads(data[offset:offset + length].decode('utf-8'))
    offset += length
    bins = header['bins']

    def take(dtype, shape):
        nonlocal offset
        count = int(np.prod(shape))
        array = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        offset += array.nbytes
        return array

    trees = []
    try:
        for meta in header['trees']:
            nodes, leaves = meta['nodes'], meta['leaves']
            shapes = {
                'kind': (nodes,), 'offsets': (nodes, 4), 'channels': (nodes, 2), 'threshold': (nodes,),
                'children': (nodes, 2), 'leaf': (nodes,), 'class_counts': (leaves, 2),
                'bin_counts': (leaves, bins, 2),
            }
            tables = {}
            for name, dtype in _TABLES:
                if name == 'bin_counts' and not meta['binned']:
                    tables[name] = None
                    continue
                tables[name] = take(dtype, shapes[name])
            trees.append(Tree(**tables))
    except ValueError as exc:
        raise FormatError(f"truncated forest file: {exc}") from exc
    return ConfidenceForest(trees, ForestConfig(**header['config']), bins, header['gamma_max'])


def save_forest(path, forest: ConfidenceForest) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(forest_to_bytes(forest))
    logger.info(f"Saved forest with {len(forest.trees)} trees to {path}")


def load_forest(path) -> ConfidenceForest:
    try:
        return forest_from_bytes(Path(path).read_bytes())
    except OSError as exc:
        raise FormatError(f"cannot read forest {path}: {exc}") from exc


def write_confidence_image(directory, image: ConfidenceImage) -> Path:
    directory = Path(directory)
    planes = directory / f"{image.image_id}_confidence.pfm"
    write_pfm_planes(planes, list(image.values))
    sidecar = directory / f"{image.image_id}_confidence.json"
    sidecar.write_text(json.dumps({
        'image_id': image.image_id,
        'planes_file': planes.name,
        'step': image.step,
        'bins': image.bins,
        'gamma_max': image.gamma_max,
        'width': image.image_size[0],
        'height': image.image_size[1],
    }, indent=2))
    return sidecar


def read_confidence_image(sidecar) -> ConfidenceImage:
    sidecar = Path(sidecar)
    try:
        meta = json.loads(sidecar.read_text())
        planes = read_pfm_planes(sidecar.parent / meta['planes_file'], meta['bins'])
        return ConfidenceImage(
            values=np.stack(planes),
            step=meta['step'],
            gamma_max=meta['gamma_max'],
            image_id=meta['image_id'],
            image_size=(meta['width'], meta['height']),
        )
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read confidence image {sidecar}: {exc}") from exc


def read_confidence_images(directory) -> dict:
    return {
        image.image_id: image
        for image in (read_confidence_image(p) for p in sorted(Path(directory).glob('*_confidence.json')))
    }
