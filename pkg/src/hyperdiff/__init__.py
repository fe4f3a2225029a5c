"""Wave-packet spreading on tight-binding chains with site-local dephasing noise."""

__version__ = "0.1.0"
