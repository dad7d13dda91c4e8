"""Bilingual LSTM language models trained from monolingual corpora with
alternating batches and an output-embedding MSE penalty."""

__version__ = "0.1.0"
