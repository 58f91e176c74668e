"""
Exceptions raised by facestab controllers
"""


class FacestabError(Exception):
    """Base class for every error the toolkit raises on purpose"""


class ParameterError(FacestabError, ValueError):
    """A configuration value or operation argument is out of range"""

    def __init__(self, name, message):
        self.name = name
        super().__init__(f"{name}: {message}")


class NonFiniteInputError(FacestabError, ValueError):
    """An input array contains NaN or infinite entries"""


class InputFormatError(FacestabError):
    """
    A dictionary, query or cache file could not be parsed

    Args:
        path (str): File being read
        message (str): What went wrong
        line (int, optional): 1-based line number (CSV files)
        offset (int, optional): Byte offset (binary files)
    """

    def __init__(self, path, message, line=None, offset=None):
        self.path = str(path)
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f", line {line}"
        elif offset is not None:
            where = f", byte {offset}"
        super().__init__(f"{self.path}{where}: {message}")


class SizeLimitError(FacestabError):
    """A problem exceeds a documented size limit (oracle size, memory budget)"""


class ProjectionError(FacestabError):
    """
    The exact projection solver hit its iteration cap

    Attributes:
        best_alpha (numpy.ndarray): Best feasible iterate found
        fw_gap (float): Frank-Wolfe gap of that iterate
    """

    def __init__(self, message, best_alpha, fw_gap):
        self.best_alpha = best_alpha
        self.fw_gap = fw_gap
        super().__init__(f"{message} (best iterate FW gap {fw_gap:.3e})")
