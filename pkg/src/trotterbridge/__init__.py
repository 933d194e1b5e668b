"""trotterbridge - quantum spin chains as classical Ising lattices one dimension higher."""

__version__ = "0.1.0"
