"""Neural-approximated virtual element method on polygonal meshes.

Offline: train a small fully-connected network to map (vertex, polygon)
pairs to harmonic-polynomial coefficients approximating the lowest-order
VEM hat functions. Online: predict the coefficients per element, assemble
second-order elliptic problems like a standard FEM, and measure errors
against manufactured solutions. A classical lowest-order VEM baseline is
included for comparison.
"""

__version__ = "0.1.0"
