import logging

from injector import inject, singleton

from ..core.ensemble import WeightedEnsemble, sample_initial
from ..core.streams import Purpose, StreamFactory
from ..settings import Settings
from .model import ModelComponent

logger = logging.getLogger(__name__)


@singleton
class EnsembleComponent:
    """
    Component that owns the random streams of a run and samples its initial ensemble.

    Args:
        settings (Settings): The experiment settings.
        model_component (ModelComponent): Provides the configuration space.
    """

    streams: StreamFactory

    @inject
    def __init__(self, settings: Settings, model_component: ModelComponent) -> None:
        self._cfg = settings.ensemble
        self._space = model_component.model.space
        self.streams = StreamFactory(self._cfg.seed)

    def initial(self, size: int | None = None) -> WeightedEnsemble:
        """
        Sample the initial ensemble from the stream keyed (initial,).

        Args:
            size (int | None): Number of particles; `ensemble.j` when None.

        Returns:
            WeightedEnsemble: The equally weighted initial ensemble.
        """
        initial = self._cfg.initial
        size = size or self._cfg.j
        logger.debug(f"Sampling {size} particles from {initial.kind}")
        return sample_initial(
            initial.kind,
            size,
            self._space,
            self.streams.initial(),
            initial.mean,
            initial.std,
            self.streams.lineage(Purpose.INITIAL),
        )
