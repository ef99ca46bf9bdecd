"""Control-translated Tonelli-Finsler Ginzburg-Landau model on the flat 2-torus."""

__version__ = "0.1.0"
