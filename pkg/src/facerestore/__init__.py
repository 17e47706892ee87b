"""Restoration of low-resolution, partially occluded face images.

Core pieces: a small numpy autodiff engine (`tensor`), graph convolution over
image patches (`graph`), generator/discriminator/attribute-classifier models
(`models`), the training losses (`losses`), a procedural labeled face corpus
(`synthdata`), the training and evaluation pipeline (`training`, `evaluate`,
`metrics`), and a FastAPI service plus CLI front end (`service`, `cli`).
"""

__version__ = "0.1.0"

from .tensor import Tensor  # noqa: F401
