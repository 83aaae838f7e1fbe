"""Reproduction harnesses: synthetic recovery benchmarks and DCT patch denoising."""
