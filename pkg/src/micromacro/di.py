from injector import Injector

from .settings import Settings


def create_application_injector(settings: Settings) -> Injector:
    """
    Build the injector of one experiment, with its validated settings bound.

    Args:
        settings (Settings): The validated experiment settings.

    Returns:
        Injector: An injector that resolves components and services on demand.
    """
    _injector = Injector(auto_bind=True)
    _injector.binder.bind(Settings, to=settings)
    return _injector
