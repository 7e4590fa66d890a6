"""twistpo: periodic orbits of area-preserving twist maps without symmetries.

Core pipeline: a Fourier-space curve through the orbit points seeds a
multiple-shooting Newton-Gauss refinement; residues of the converged orbits
drive criticality continuation studies.
"""

from twistpo.dd import DoubleDouble

__all__ = ["DoubleDouble"]

__version__ = "0.1.0"
