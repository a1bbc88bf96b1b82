"""Reference-free lossless compression of DNA reads."""

from .container import (
    CompressParams,
    CompressReport,
    ContainerError,
    compress_pipeline,
    container_stats,
    decompress_file,
    decompress_pipeline,
)

__all__ = [
    "CompressParams",
    "CompressReport",
    "ContainerError",
    "compress_pipeline",
    "container_stats",
    "decompress_file",
    "decompress_pipeline",
]
__version__ = "0.1.0"
