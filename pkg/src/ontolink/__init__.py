"""End-to-end concept recognition and linking against large alias-table ontologies."""

__version__ = "0.1.0"


class OntolinkError(Exception):
    """Base class for pipeline failures that should abort with exit code 1."""
