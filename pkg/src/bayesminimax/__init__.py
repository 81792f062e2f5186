"""Bayes minimax shrinkage priors for a multivariate normal mean.

Numerical construction of spherically symmetric priors whose Bayes
estimators are minimax, together with the verification toolkit: sufficient
condition checkers, Stein's unbiased risk estimate, and seeded Monte Carlo
risk simulation.
"""

__version__ = "0.1.0"
