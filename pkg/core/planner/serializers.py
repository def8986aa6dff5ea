"""Validation of snapshot, region-of-interest and plan JSON."""

from rest_framework import serializers

from core.exceptions import FormatError
from core.geometry.serializers import CameraSerializer
from .types import ROLE_GRID, ROLE_REGISTRATION, ROLE_TRIPLET


class SnapshotSerializer(serializers.Serializer):
    """{cameras, mesh, images?, confidences?, roi?}; paths relative to the snapshot file."""

    cameras = serializers.JSONField()
    mesh = serializers.CharField()
    images = serializers.DictField(child=serializers.CharField(), required=False, default=dict)
    confidences = serializers.CharField(required=False, allow_blank=True, default='')
    roi = serializers.ListField(child=serializers.IntegerField(min_value=0), required=False, allow_null=True,
                                default=None)

    def validate_cameras(self, value):
        if not isinstance(value, (list, str)):
            raise serializers.ValidationError("cameras must be an array or a camera file path")
        return value


class RoiSerializer(serializers.Serializer):
    """{image_id, polygon: [[x, y], ...]} in full-resolution pixels."""

    image_id = serializers.CharField(max_length=128)
    polygon = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2),
        min_length=3,
    )


class PlanSerializer(serializers.Serializer):
    cameras = CameraSerializer(many=True)
    roles = serializers.ListField(child=serializers.ChoiceField(choices=[ROLE_TRIPLET, ROLE_REGISTRATION, ROLE_GRID]))
    order = serializers.ListField(child=serializers.CharField())
    total_path_m = serializers.FloatField(min_value=0.0)
    config_echo = serializers.DictField(required=False, default=dict)
    seed = serializers.IntegerField(required=False, default=0)

    def validate(self, attrs):
        if len(attrs['roles']) != len(attrs['cameras']) or len(attrs['order']) != len(attrs['cameras']):
            raise serializers.ValidationError("cameras, roles and order must have equal length")
        return attrs


def validated(serializer_class, data, what: str) -> dict:
    """Run a serializer and convert its errors into FormatError."""
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise FormatError(f"invalid {what}: {serializer.errors}")
    return serializer.validated_data
