"""Mean-field control of thermostatic load ensembles: simulation, PDE and spectrum."""

__version__ = "0.1.0"
