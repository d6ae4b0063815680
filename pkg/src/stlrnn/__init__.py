"""Signal temporal logic control synthesis with CBF safety filters and LSTM controllers."""

__version__ = "0.1.0"
