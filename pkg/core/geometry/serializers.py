"""Validation of camera JSON records."""

from typing import Iterable, List

import numpy as np
from rest_framework import serializers

from core.exceptions import FormatError
from .types import Camera, CameraIntrinsics, CameraPose


class CameraSerializer(serializers.Serializer):
    """One camera: {id, focal, pp, width, height, R (row-major 9), C (3)}."""

    id = serializers.CharField(max_length=128)
    focal = serializers.FloatField(min_value=0.0)
    pp = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2)
    width = serializers.IntegerField(min_value=1)
    height = serializers.IntegerField(min_value=1)
    R = serializers.ListField(child=serializers.FloatField(), min_length=9, max_length=9)
    C = serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3)

    def validate(self, attrs):
        try:
            attrs['camera'] = Camera(
                CameraIntrinsics(attrs['focal'], tuple(attrs['pp']), (attrs['width'], attrs['height'])),
                CameraPose(np.array(attrs['R']).reshape(3, 3), np.array(attrs['C'])),
                attrs['id'],
            )
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs


def parse_cameras(records) -> List[Camera]:
    """Validate a JSON camera array; raises FormatError with serializer errors."""
    if not isinstance(records, list):
        raise FormatError("camera file must hold a JSON array")
    serializer = CameraSerializer(data=records, many=True)
    if not serializer.is_valid():
        raise FormatError(f"invalid cameras: {serializer.errors}")
    cameras = [item['camera'] for item in serializer.validated_data]
    ids = [camera.id for camera in cameras]
    if len(set(ids)) != len(ids):
        raise FormatError("camera ids must be unique")
    return cameras


def camera_to_dict(camera: Camera) -> dict:
    return {
        'id': camera.id,
        'focal': float(camera.focal),
        'pp': [float(v) for v in camera.intrinsics.principal_point],
        'width': camera.intrinsics.width,
        'height': camera.intrinsics.height,
        'R': [float(v) for v in camera.rotation.ravel()],
        'C': [float(v) for v in camera.center],
    }


def cameras_to_list(cameras: Iterable[Camera]) -> list:
    return [camera_to_dict(camera) for camera in cameras]
