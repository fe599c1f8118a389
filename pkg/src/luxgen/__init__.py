"""Desk-scale toolkit for low-resource generative LM pipelines.

Builds a balanced multilingual corpus, pre-trains an encoder-decoder
transformer with a span-corruption objective, constructs the LuxGen
generation tasks plus a moderation task, and evaluates with BLEU and
classification metrics.
"""

__version__ = "0.1.0"
