"""Quantitative cerebral perfusion reconstruction from fan-beam sinogram data.

The heavy lifting lives in the compiled extension ``_perfrec``; this package
re-exports its surface.
"""

from _perfrec import (  # noqa: F401
    AifModel,
    FanBeamGeometry,
    ImageGrid,
    back_project,
    desk_phantom,
    fbp_reconstruct,
    forward_project,
    psnr,
    rrmse,
    run_study,
    run_trainer_small,
    sample_aif,
    synthesize_dynamic,
)

__all__ = [
    "AifModel",
    "FanBeamGeometry",
    "ImageGrid",
    "back_project",
    "desk_phantom",
    "fbp_reconstruct",
    "forward_project",
    "psnr",
    "rrmse",
    "run_study",
    "run_trainer_small",
    "sample_aif",
    "synthesize_dynamic",
]
