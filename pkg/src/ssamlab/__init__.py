"""ssamlab: sharpness-aware optimizer laboratory.

Implements the SGD / SAM / SAM* family with an optional gradient
renormalization step (SSAM), the strongly convex theory behind it
(closed-form stability, convergence, and excess-risk bounds plus Monte-Carlo
inequality verification), and deterministic desk-scale experiments producing
CSV tables and SVG plots.
"""

__version__ = "0.1.0"
