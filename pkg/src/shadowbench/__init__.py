"""shadowbench: randomized measurements, batch-shadow estimators and
exact/free-fermion oracles for operator entanglement and its symmetry
resolution."""

__version__ = "0.1.0"
