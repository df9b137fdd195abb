"""Multi-DNN inference pipeline built around training-free model stitching.

Modules:
    zoo         tasks, sparse variants, layer-aligned subgraphs, stitching
    profiles    ground-truth latency/accuracy tables and synthetic generation
    estimator   stitched-variant accuracy/latency prediction and metrics
    optimizer   SLO filtering, placement-order and variant selection
    preloader   hotness scores and budget-bounded subgraph preloading
    simulator   deterministic discrete-event multi-task pipeline simulation
    experiments canned desk-scale experiment recipes
    cli         command-line interface over all of the above
"""

__version__ = "0.1.0"
