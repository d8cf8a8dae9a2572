"""Exception hierarchy shared by all modules."""


class ModelValidityError(ArithmeticError):
    """A numeric result falls outside the range where the model is valid."""


class SaturatedRegimeError(ModelValidityError):
    """The water-level equation has no real root for this SNR/distortion pair."""


class InfeasibleError(ValueError):
    """No valid precoder or allocation exists for the given inputs."""


class ConfigError(ValueError):
    """Bad scenario configuration or command-line override."""
