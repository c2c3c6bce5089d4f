"""msym: multisymplectic Yang-Mills toolkit on trivial principal bundles T^n x G."""

__version__ = "0.1.0"
