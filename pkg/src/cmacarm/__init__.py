"""Sparse coarse-coded approximator for planar arm dynamics.

Subpackages:

* :mod:`cmacarm.dynamics` -- exact Lagrange-Euler oracle
* :mod:`cmacarm.encoding` -- tiling-based sparse position encoding
* :mod:`cmacarm.golgi` -- granule/Golgi activity control loop
* :mod:`cmacarm.network` -- trainable per-term torque approximators
* :mod:`cmacarm.archmodel` -- table-lookup architecture arithmetic
* :mod:`cmacarm.cli` -- experiment command line
"""

__version__ = "0.1.0"
