"""signbench: road-sign classifier robustness benchmark.

Trains a small fixed CNN on road-sign / geometric-shape imagery, measures how
it degrades under three synthetic physical attacks (tape strips, graffiti
strokes, glare), runs the six-way clean/adversarial/transfer experiment
matrix, ranks the runs with a weighted-criteria score, and queues
low-confidence predictions for human review.
"""

__version__ = "0.1.0"
