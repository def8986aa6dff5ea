"""
Confidence app - patch forest predicting MVS success per triangulation-angle bin.
"""
