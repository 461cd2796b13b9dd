"""Certification of first- and second-order optimality conditions for calm
local minimax points of smooth couple-constrained minimax problems."""

__version__ = "0.1.0"
