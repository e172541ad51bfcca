"""Regular-vine copula modelling and channel dynamics analysis."""

__version__ = "0.1.0"
