"""Multi-attribute relation extraction: sequence tagging and span labeling
approaches, rule-based relation assembly and strategy-based evaluation."""

__version__ = "0.1.0"
