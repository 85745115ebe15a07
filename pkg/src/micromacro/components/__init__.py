from .ensemble import EnsembleComponent
from .model import ModelComponent
from .output import OutputComponent
from .restriction import RestrictionComponent

__all__ = [
    EnsembleComponent,
    ModelComponent,
    OutputComponent,
    RestrictionComponent,
]
