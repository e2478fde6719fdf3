"""
Single-view 3D shape reconstruction from 2D landmarks.

A feed-forward tanh network regresses per-landmark depth from standardized
2D coordinates; an optional recurrent layer fills in missing landmarks.
"""
__version__ = "1.0.0"
