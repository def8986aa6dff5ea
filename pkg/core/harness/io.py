"""Acquisition logs (JSON lines), metrics JSON and error histogram CSV."""

import csv
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from core.exceptions import FormatError
from core.geometry.serializers import parse_cameras
from .oracle import oracle_mvs
from .scenes import build_scene
from .types import AcquisitionLog, ErrorHistogram, Metrics, OracleModel, SyntheticScene, TripletOutcome

logger = logging.getLogger(__name__)


def _builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_log(path, log: AcquisitionLog) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        for event in log.events:
            handle.write(json.dumps(event, default=_builtin) + '\n')
    logger.info(f"Wrote {len(log.events)} log events to {path}")


def read_log_events(path) -> List[dict]:
    events = []
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            for number, line in enumerate(handle, start=1):
                if line.strip():
                    events.append(json.loads(line))
    except OSError as exc:
        raise FormatError(f"cannot read log {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"log {path} line {number} is not JSON: {exc}") from exc
    if not events or events[0].get('event') != 'start':
        raise FormatError(f"log {path} does not begin with a start event")
    return events


def replay_log(path, scene: Optional[SyntheticScene] = None) -> Tuple[AcquisitionLog, SyntheticScene]:
    """Rebuild a log, recomputing oracle outputs from the logged cameras and seed."""
    events = read_log_events(path)
    start = events[0]
    if scene is None:
        scene = build_scene(start['preset'], start['scene_seed'])
    model = OracleModel(**start['model'])
    log = AcquisitionLog(strategy=start['strategy'], preset=start['preset'], seed=start['seed'], model=model,
                         events=events)
    cameras = {}
    for event in events:
        if event['event'] == 'capture':
            captured = parse_cameras(event['cameras'])
            log.cameras.extend(captured)
            cameras.update((camera.id, camera) for camera in captured)
        elif event['event'] == 'triplet':
            try:
                triplet = tuple(cameras[camera_id] for camera_id in event['camera_ids'])
            except KeyError as exc:
                raise FormatError(f"triplet {event['triplet_id']} refers to uncaptured camera {exc}") from exc
            log.outcomes.append(TripletOutcome(event['triplet_id'], event['source'], triplet,
                                               oracle_mvs(triplet, scene, model, log.seed)))
        elif event['event'] == 'plan' and 'seconds' in event:
            log.timings.append(event['seconds'])
    return log, scene


def write_metrics(path, metrics: Metrics) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(metrics.as_dict(), indent=2, default=_builtin))


def write_histogram_csv(path, histogram: ErrorHistogram) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(['bin_center', 'mass'])
        for center, mass in zip(histogram.bin_centers, histogram.mass):
            writer.writerow([float(center), float(mass)])
