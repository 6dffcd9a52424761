"""Exception hierarchy shared by all modules."""


class CRError(Exception):
    """Base class for library errors."""


class OutOfChartError(CRError):
    pass


class GeometryError(CRError):
    pass


class ResolutionError(CRError):
    pass


class RangeError(CRError):
    pass


class PreconditionError(CRError):
    pass


class DataError(CRError):
    pass


class SingularityError(CRError):
    """Kernel evaluated on its singular set.

    ``distance`` carries |zeta - z| for diagnostics.
    """

    def __init__(self, msg, distance=None):
        super().__init__(msg)
        self.distance = distance


class UnsupportedSettingError(CRError):
    pass


class ConfigError(CRError):
    def __init__(self, msg, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{msg} ({', '.join(loc)})" if loc else msg)
        self.line = line
        self.field = field
