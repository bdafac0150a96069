"""p2pforge: signature-driven P2P overlay investigation toolkit."""

__version__ = "0.1.0"
