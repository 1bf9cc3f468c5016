"""Exception hierarchy; the CLI maps each class to a one-line error and exit code."""


class IaqcnnError(Exception):
    exit_code = 1


class ConfigError(IaqcnnError, ValueError):
    exit_code = 2


class DataError(IaqcnnError, ValueError):
    exit_code = 3


class GateError(IaqcnnError, ValueError):
    """Structurally invalid gate or circuit (coinciding qubits, too few active qubits)."""

    exit_code = 4


class ContractError(IaqcnnError, ValueError):
    """Dimension mismatch between features, parameters and circuit plan."""

    exit_code = 5


class StorageError(IaqcnnError, OSError):
    exit_code = 6
