# Renewal-state hypothesis testing for variable-length Markov chains
__version__ = "1.0.0"
