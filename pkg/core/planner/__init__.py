"""
Planner app - fulfillment estimation, surrogate cameras, triplet search
and registration-safe path ordering.
"""
