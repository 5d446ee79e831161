"""genaug: generative data augmentation pipeline.

Generate object descriptions from class labels, synthesize labeled images
from the descriptions (or the labels directly), mix them into classification
datasets under controlled ratios and settings, and measure the effect with a
desk-scale training harness and captioning metrics.
"""

__version__ = "0.1.0"

from .corpus import Caption, EntitySet, PromptedCaption, render_prompt
from .datasets import AugmentationPlan, Category, Dataset, ImageRecord
from .imagegen import GenerationRequest, ImageCache, ImageSpec, SyntheticImage
from .textgen import DecodeConfig, Description, LabelSpec
from .trainer import RunReport, TrainConfig

__all__ = [
    "AugmentationPlan",
    "Caption",
    "Category",
    "Dataset",
    "DecodeConfig",
    "Description",
    "EntitySet",
    "GenerationRequest",
    "ImageCache",
    "ImageRecord",
    "ImageSpec",
    "LabelSpec",
    "PromptedCaption",
    "RunReport",
    "SyntheticImage",
    "TrainConfig",
    "render_prompt",
    "__version__",
]
