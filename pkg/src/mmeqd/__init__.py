"""Eigenvalue-ratio (MME) spectrum sensing for two receivers: exact statistic
distributions, block detection and CUSUM/GLR quickest detection."""

__version__ = "0.1.0"
