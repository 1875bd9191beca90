"""Pseudo-marginal MCMC with Russian-roulette likelihood estimates."""
