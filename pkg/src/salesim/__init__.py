"""Simulation and evaluation framework for knowledge-grounded sales chat.

Two actors — a seller with a buying guide and product catalog, and a shopper
whose preferences unlock gradually — converse until a recommendation is
accepted or the session runs out of turns. Either side can be a human or a
model-backed bot; sellers are scored on recommendation quality,
informativeness, fluency, and faithfulness.
"""

from .errors import SalesimError

__version__ = "0.1.0"

__all__ = ["SalesimError", "__version__"]
