"""Exception hierarchy shared across the toolkit."""


class GazekitError(Exception):
    """Base class for all toolkit errors."""


class CorpusError(GazekitError):
    """Malformed corpus file or a corpus violating its structural invariants."""


class ConfigError(GazekitError):
    """Invalid configuration value (ratios, adapter names, feature names, ...)."""


class TrainingError(GazekitError):
    """Training aborted (non-finite loss, empty training set, ...)."""
