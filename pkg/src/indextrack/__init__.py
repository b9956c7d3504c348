"""Index tracking with exact transaction costs and a PPO-trained policy."""

__version__ = "0.1.0"
