"""Convert fully-connected PyTorch checkpoints into the NNW1 weight
container (bias folded into a trailing weight column) and labeled tensor
datasets into the matching CSV layout, so the compression tool can work on
externally trained models.

Only the file formats are shared with the compression tool; this package
has no code dependency on it.
"""

from .convert import ExportError, export_dataset, export_model  # noqa: F401

__version__ = "0.1.0"
