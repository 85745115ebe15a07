import logging

from injector import inject, singleton

from ..core.space_model import SdeModel, build_model
from ..settings import Settings

logger = logging.getLogger(__name__)


@singleton
class ModelComponent:
    """Component that provides the SDE model selected by `model.label`."""

    model: SdeModel

    @inject
    def __init__(self, settings: Settings) -> None:
        cfg = settings.model
        logger.debug(f"Initializing model {cfg.label}")
        self.model = build_model(cfg.label, cfg.theta, cfg.sigma)
