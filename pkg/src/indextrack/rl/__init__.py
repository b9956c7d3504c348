"""Policy/value networks, advantage estimation and PPO training."""
