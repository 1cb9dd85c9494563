"""First-order full-, quarter- and mixed-moment closures for 2D Fokker-Planck transport."""

__version__ = "0.1.0"
