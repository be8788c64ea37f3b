"""
Test suite for the immune engine.
"""
