"""folia: executable checks for singular foliations, bi-submersions and Lie algebroids."""

__version__ = "0.1.0"
