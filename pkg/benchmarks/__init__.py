"""
membrane-opt performance benchmarks.
"""
