"""
Harness app - synthetic scenes, the MVS oracle, grid baselines,
closed-loop acquisition and evaluation metrics.
"""
