class CausalOrderError(Exception):
    """
    Root of every error raised by `py_causal_order`.

    The three families below map to distinct CLI exit statuses:
    - `UsageError`: the caller asked for something that cannot be done with the given inputs.
    - `DataError`: an input artifact is malformed or inconsistent.
    - `ResourceError`: a configured resource limit was hit.
    """

    exit_status: int = 1


class UsageError(CausalOrderError):
    exit_status = 2


class DataError(CausalOrderError):
    exit_status = 3


class ResourceError(CausalOrderError):
    exit_status = 4
