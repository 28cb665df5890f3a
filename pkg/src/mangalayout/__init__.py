"""Panel-layout ablation toolkit for manga facing pages."""

__version__ = "0.1.0"
