"""Log-free linearizable replication: protocol model, simulators and checkers."""

__version__ = "0.1.0"
