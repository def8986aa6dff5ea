"""
Test suite for viewforge: geometry, labels, confidence, planning and the simulation harness.
"""
