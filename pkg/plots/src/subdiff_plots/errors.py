class SchemaMismatch(Exception):
    """The CSV or summary file does not match the documented schema."""


class MissingSeries(Exception):
    """A requested algorithm series is absent (or the selection is empty)."""
