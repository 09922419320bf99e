"""CKKS over an RNS modulus chain."""
