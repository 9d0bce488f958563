"""
NeuralHeadX - neural parametric head models on the CPU.

This package provides locally decomposed identity SDFs, forward expression
deformation fields, registration, training and latent fitting utilities,
together with a procedural head family used as ground truth.
"""

__version__ = "0.1.0"
