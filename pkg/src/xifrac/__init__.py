"""Anti-plane AT1 phase-field fracture with an adaptive regularization length."""

__version__ = "0.1.0"

from . import config, driver, fem, mesh, output, phasefield  # noqa: F401
