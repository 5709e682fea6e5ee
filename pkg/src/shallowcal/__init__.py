"""Shallow ReLU networks, constant-step gradient descent with early stopping,
random-feature reference models, and calibration measurement on synthetic
binary classification tasks with known conditional probabilities."""

__version__ = "0.1.0"
