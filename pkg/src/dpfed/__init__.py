"""dpfed: differentially private federated learning simulator and accountant."""

__version__ = "0.1.0"

from . import accountant, datagen, engine, metrics, models  # noqa: F401
