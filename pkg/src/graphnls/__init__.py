"""Ground states and nodal ground states of the NLS action on noncompact metric graphs."""
__version__ = "0.1.0"
