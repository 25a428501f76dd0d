class DataError(ValueError):
    """Input data failed validation.

    ``location`` is a human readable pointer (``path:line`` or a byte offset)
    when the error came from a file.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class NotReadyError(RuntimeError):
    """Raised by the search service before its indexes are loaded."""
