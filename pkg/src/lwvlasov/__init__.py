"""Liénard-Wiechert formulation toolkit for the 3D relativistic Vlasov-Maxwell system."""
__version__ = "0.1.0"
