"""Split-step Fourier simulation of the Marcus-form stochastic NLS with jump noise."""
__version__ = "0.1.0"
