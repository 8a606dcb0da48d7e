"""
andreev-bs - Semiclassical Andreev levels of 1-D SNS junctions

Bohr-Sommerfeld quantization of the Bogoliubov-de Gennes operator, checked
against finite-difference and shooting oracles.
"""

__version__ = "0.1.0"
__author__ = "Sebastian Lobentanzer"
__email__ = "sebastian.lobentanzer@gmail.com"
