"""Transformer token-classification backend for the logveil bridge protocol.

This package is deliberately independent of the ``logveil`` library: it
consumes the annotated TSV corpus format and speaks bridge wire protocol v1
over stdio, nothing more.  Train a checkpoint with ``backend_train`` (or
``python -m logveil_backend train``) and serve it with ``backend_serve``.
"""

from .config import BridgeConfig
from .serve import backend_serve
from .train import BackendError, backend_train

__all__ = ["BridgeConfig", "BackendError", "backend_train", "backend_serve"]
__version__ = "0.1.0"
