"""Exception hierarchy.

Anything the CLI should report as a usage/parameter problem (exit code 2)
derives from :class:`InputError`; everything else is a runtime failure.
"""


class HyperconnectomeError(Exception):
    pass


class InputError(HyperconnectomeError):
    pass


class LoadError(InputError):
    pass


class ValidationError(InputError, ValueError):
    pass


class CohortError(InputError, ValueError):
    pass


class ParameterError(InputError, ValueError):
    pass


class ProtocolError(InputError, ValueError):
    pass


class ShapeError(HyperconnectomeError, ValueError):
    pass


class DegeneracyError(HyperconnectomeError):
    pass


class InstabilityError(HyperconnectomeError):
    pass


class TrainingError(HyperconnectomeError):
    pass
