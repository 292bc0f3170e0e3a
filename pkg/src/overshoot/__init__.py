"""Overshoot of adaptive finite element approximations to discontinuous
solutions: step-function projections, 1D reaction-diffusion and 2D upwind
DG transport, with refine/coarsen drivers."""
from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0+unknown"
