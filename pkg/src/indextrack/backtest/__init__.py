"""Rolling-window backtests, evaluation and reports."""
