"""K-means and kernel K-means with K-MACE cluster-count estimation."""

from .core import Dataset, Partition, RngSpec, validate_dataset
from .ace import select_cnc, SelectionReport
from .kmeans import kmeans

__all__ = ["Dataset", "Partition", "RngSpec", "validate_dataset", "select_cnc", "SelectionReport", "kmeans"]
__version__ = "0.1.0"
