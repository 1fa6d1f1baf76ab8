"""Privacy-preserving feature extraction by adversarial training plus
Jensen-Shannon mutual-information maximization."""

__version__ = "0.1.0"
