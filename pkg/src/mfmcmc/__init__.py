"""Multi-fidelity pseudo-marginal MCMC."""

__version__ = "0.1.0"
