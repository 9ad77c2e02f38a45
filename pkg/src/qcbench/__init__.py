"""Benchmarking suite and noisy digital twin for square-lattice superconducting processors."""

__version__ = "0.1.0"
