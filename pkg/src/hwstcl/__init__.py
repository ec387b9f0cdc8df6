"""Joint spatio-temporal graph contrastive learning on dynamic functional connectivity."""
__version__ = "0.1.0"
