"""Encrypted federated learning with oracle-mediated noise cancellation over an auditable ledger."""

from ._native import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
