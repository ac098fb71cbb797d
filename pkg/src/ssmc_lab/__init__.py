"""Self-switching Markov chains: simulation, hitting times, occupation and dominance."""

__version__ = "0.1.0"
