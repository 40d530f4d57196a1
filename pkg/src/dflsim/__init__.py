"""Engine-driven ducted fan lift system: plant models, network
identification, and an adaptive model predictive controller."""

__version__ = "0.1.0"
