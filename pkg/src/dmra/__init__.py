"""Dynamic mining-resource allocation for PoW blockchains: model, solver, simulator, bounds."""

__version__ = "0.1.0"
