"""Geometric phases of a dephased tripod atom under double STIRAP."""
