"""Base exception for all domain errors raised by this package."""


class MiloError(Exception):
    pass
