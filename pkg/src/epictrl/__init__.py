"""Optimal lockdown, testing and vaccination under partial observation.

Modules
-------
model      diffusion epidemic model and Euler-Maruyama simulator
filtering  extended Kalman filter and information-state transition
costs      running and terminal costs, full and partial information
quantize   optimal quantizers of the Gaussian innovation
solver     backward dynamic programming on the information-state grid
cli        ``epictrl`` command line tool
"""

__version__ = "0.1.0"
