"""Hotelling deflation on symmetric spiked random tensors."""
