"""P&ID raster to validated IEC 61131-3 Structured Text toolchain."""

__version__ = "0.1.0"
