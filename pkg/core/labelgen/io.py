"""Label files: 8-bit PGM labels, PFM angle planes and a JSON sidecar per image."""

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List

import numpy as np

from core.exceptions import FormatError
from core.geometry.io import read_pfm, read_pgm, write_pfm, write_pgm
from .types import POSITIVE, LabelImage, LabelSet, TripletSample

logger = logging.getLogger(__name__)


def write_label_image(directory, image: LabelImage) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    angle_file = f"{image.camera_id}_angles.pfm"
    triplet_file = f"{image.camera_id}_triplets.pfm"
    write_pgm(directory / f"{image.camera_id}.pgm", image.labels)
    write_pfm(directory / angle_file, np.where(image.labeled, image.angles, np.inf))
    write_pfm(directory / triplet_file, np.where(image.labeled, image.triplet_ids, -1).astype(float))
    sidecar = directory / f"{image.camera_id}.json"
    sidecar.write_text(json.dumps({
        'image_id': image.camera_id,
        'angle_deg_per_pixel_file': angle_file,
        'triplet_id_file': triplet_file,
    }, indent=2))
    return sidecar


def read_label_image(sidecar) -> LabelImage:
    sidecar = Path(sidecar)
    try:
        meta = json.loads(sidecar.read_text())
        image_id = meta['image_id']
        labels = read_pgm(sidecar.parent / f"{image_id}.pgm")
        angles = read_pfm(sidecar.parent / meta['angle_deg_per_pixel_file'])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read label sidecar {sidecar}: {exc}") from exc
    if labels.max(initial=0) > POSITIVE:
        raise FormatError(f"label image {image_id} holds values outside 0..2")
    triplet_path = sidecar.parent / meta.get('triplet_id_file', '')
    triplets = read_pfm(triplet_path).astype(np.int64) if meta.get('triplet_id_file') and triplet_path.exists() \
        else np.full(labels.shape, -1, dtype=np.int64)
    labeled = labels != 0
    return LabelImage(image_id, labels, np.where(labeled, angles, np.nan), np.where(labeled, triplets, -1))


def write_label_set(directory, label_set: LabelSet) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for image in label_set.images.values():
        write_label_image(directory, image)
    (directory / 'triplets.json').write_text(json.dumps([asdict(s) for s in label_set.samples], indent=2))
    (directory / 'report.json').write_text(json.dumps(label_set.report.as_dict(), indent=2))
    logger.info(f"Wrote {len(label_set.images)} label images to {directory}")


def read_label_images(directory) -> Dict[str, LabelImage]:
    images = {}
    for sidecar in sorted(Path(directory).glob('*.json')):
        if sidecar.name in ('triplets.json', 'report.json'):
            continue
        image = read_label_image(sidecar)
        images[image.camera_id] = image
    return images


def read_triplet_samples(directory) -> List[TripletSample]:
    records = json.loads((Path(directory) / 'triplets.json').read_text())
    return [TripletSample(r['id'], tuple(r['camera_ids']), r['angle_bin'], r['angle']) for r in records]
