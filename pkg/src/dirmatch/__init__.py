"""Dense correspondence between nearly isometric shapes by dual iterative refinement."""

__version__ = "0.1.0"
