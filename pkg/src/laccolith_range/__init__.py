"""Deterministic cyber range built around hypervisor-level agent injection.

Everything runs against a synthetic guest machine: a byte-level physical
memory image, a seeded syscall workload, modeled security products, and an
in-memory C2 channel. Results reproduce exactly from (config, seed).
"""

__version__ = "0.1.0"
