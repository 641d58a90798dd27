"""Frame-level refinement of clustering output."""

from .frames import (
    SILENCE,
    FrameAssignment,
    annotation_to_frames,
    frames_to_annotation,
    regions_to_mask,
)
from .gmm import Gmm, fit_gmm, gmm_loglik, gmm_resegment
from .overlap import assign_overlap_labels
from .vb import (
    VbConfig,
    VbModel,
    elbo,
    forward_backward,
    load_vb_model,
    save_vb_model,
    train_vb_model,
    transition_matrix,
    vb_resegment,
)

__all__ = [
    "SILENCE", "FrameAssignment", "annotation_to_frames", "frames_to_annotation",
    "regions_to_mask", "Gmm", "fit_gmm", "gmm_loglik", "gmm_resegment",
    "assign_overlap_labels", "VbConfig", "VbModel", "elbo", "forward_backward",
    "load_vb_model", "save_vb_model", "train_vb_model", "transition_matrix",
    "vb_resegment",
]
