"""Branching-microstructure constructions for compliance minimization with
perimeter penalty: geometry kernel, piecewise stress fields with machine
admissibility certificates, the cell families and their layered assembly,
cost evaluation, and regime/scaling diagnostics."""

__version__ = "0.1.0"
