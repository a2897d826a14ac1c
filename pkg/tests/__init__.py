"""
membrane-opt test suite.
"""
