"""Monte Carlo laboratory for stochastic reaction-diffusion fronts with
Wright-Fisher noise."""

__version__ = "0.1.0"
