"""Speaker diarization back-end toolkit.

Annotation algebra and file formats, corpus metadata, segmentation, PLDA and
cosine scoring, AHC and spectral clustering, GMM and VB resegmentation,
overlap labeling, DER scoring and a batch pipeline.
"""

__version__ = "0.1.0"

from .core import Annotation, EmbeddingSet, ScoreMatrix, Segment, SpeakerTurn

__all__ = ["Annotation", "EmbeddingSet", "ScoreMatrix", "Segment", "SpeakerTurn", "__version__"]
