"""Semidefinite lower bounds to quantum discord from local broadcasting."""
__version__ = "0.1.0"
