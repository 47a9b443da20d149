"""Full-page text recognition: CNN encoder, Transformer decoder, synthetic pages."""
__version__ = "0.1.0"
