"""oband-nli: closed-form ISRS GN model of nonlinear interference for O-band WDM."""

__version__ = "0.1.0"

__all__ = ["__version__"]
