"""Exception hierarchy. The CLI maps each class to an exit code."""


class ThermoregError(Exception):
    exit_code = 1


class ConfigError(ThermoregError):
    exit_code = 2


class DataError(ThermoregError):
    exit_code = 3


class NumericalError(ThermoregError):
    exit_code = 4


class RankDeficientWarning(UserWarning):
    """Least-squares system was singular; the minimum-norm solution was used."""
