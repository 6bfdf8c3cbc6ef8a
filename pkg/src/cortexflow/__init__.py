"""Simulation of adhesion-independent migration of a 2D elastic cortex."""
