class ValidationError(ValueError):
    """Invalid input. ``field`` names the offending parameter when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
