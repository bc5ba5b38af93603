from .base import ExperimentLogger, LoggerCollection
from .csv_log import CSVLogger

__all__ = ["ExperimentLogger", "LoggerCollection", "CSVLogger"]
