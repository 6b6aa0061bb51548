"""Quadruple-tank process with decentralized PI control and distributed observers."""

__version__ = "0.1.0"
