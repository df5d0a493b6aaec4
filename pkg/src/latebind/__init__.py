"""Self-contained analytical query engine with runtime-late-bound operator
choices, plus the benchmark harness that measures how decision timing moves
tail latency under input drift, stale statistics, and accelerator
amortization regimes."""

__version__ = "0.1.0"
