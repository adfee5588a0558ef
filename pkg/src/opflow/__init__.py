"""Operator-valued stochastic interpolants."""
