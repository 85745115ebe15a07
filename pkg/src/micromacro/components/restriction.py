import logging

from injector import inject, singleton

from ..core.restriction import RestrictionFunction, RestrictionSet, build_restriction, candidate_function
from ..settings import Settings
from .model import ModelComponent

logger = logging.getLogger(__name__)


@singleton
class RestrictionComponent:
    """
    Component that provides the restriction functions of an experiment.

    Args:
        settings (Settings): The experiment settings.
        model_component (ModelComponent): Provides the configuration space.
    """

    restriction: RestrictionSet

    @inject
    def __init__(self, settings: Settings, model_component: ModelComponent) -> None:
        self._settings = settings
        self._space = model_component.model.space
        cfg = settings.restriction
        logger.debug(f"Initializing {cfg.family} restriction of level {cfg.level}")
        self.restriction = build_restriction(cfg.family, cfg.level, self._space)

    def candidates(self) -> list[RestrictionFunction]:
        """The candidate pool listed under `moment_gain.candidates`, in order."""
        return [
            candidate_function(c.kind, c.order, c.center, c.width, self._space, c.name)
            for c in self._settings.moment_gain.candidates
        ]
