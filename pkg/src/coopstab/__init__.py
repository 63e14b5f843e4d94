"""Stability-region bounds and slot-level simulation for a cognitive radio
network with an energy-harvesting, cooperatively relaying secondary user."""

__version__ = "0.1.0"
