"""Part-based landmark transfer learning for facial expression recognition, in numpy."""

__version__ = "0.1.0"
