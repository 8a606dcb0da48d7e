"""
Tests for andreev-bs.
"""
