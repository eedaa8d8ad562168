"""Fock-state simulation of cascaded entanglement swapping with polarization qubits."""

__version__ = "0.1.0"
