"""dragfield: point-drag editing over synthetic differentiable feature fields.

Discriminative point tracking (a per-point 1x1 filter trained once before
manipulation), confidence-gated motion supervision (dynamic vs template
loss), and an Adam-driven latent drag loop, with analytic ground truth
for every scene.
"""

from .errors import (BoundsError, ConvergedSignal, DegeneratePatchError,
                     DragfieldError, NumericError, ShapeError,
                     TrainingDivergedError, UnsupportedScenarioError,
                     ValidationError)
from .field import (BlobSceneSpec, BlobSpec, FeatureField, LatentCode,
                    generate, render_rgb, semantic_oracle)
from .supervision import SupervisionConfig, select_loss
from .tensor import Tensor, bilinear_sample, finite_difference_check

__version__ = "0.1.0"
