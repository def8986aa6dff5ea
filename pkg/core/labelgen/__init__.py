"""
Labelgen app - self-supervised MVS training labels from triplet depthmaps.
"""
