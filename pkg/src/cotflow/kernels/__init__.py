"""Hot numeric kernels with numba and pure-numpy implementations."""
