"""Exception hierarchy shared across the pipeline.

Two top-level families so the CLI can map failures onto exit codes:
``InputError`` covers anything wrong with files, formats or parameters
(exit code 2), ``NumericalError`` covers degenerate geometry and solver
breakdowns (exit code 3).
"""


class InputError(Exception):
    """Bad input: missing/malformed files or invalid parameter values."""


class ParseError(InputError):
    """A reader could not make sense of a file; message names the offset."""


class NumericalError(Exception):
    """A numerical procedure failed on otherwise well-formed input."""


class DegenerateGeometryError(NumericalError):
    """Geometry too degenerate to solve (collinear samples, parallel rays...)."""
