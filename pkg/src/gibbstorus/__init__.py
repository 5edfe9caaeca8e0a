"""Transfer operators, Gibbs measures and their numerical oracles on tori."""

__version__ = "0.1.0"
