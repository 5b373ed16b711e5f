"""Arc-standard dependency parsing with standard and hybrid training oracles"""

__version__ = "1.0.0"
