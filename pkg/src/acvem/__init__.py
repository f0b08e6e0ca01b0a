"""Virtual elements for the acoustic eigenproblem -grad div u = lambda u on polygonal meshes."""

__version__ = "0.1.0"
