"""Domain types, numerics and the experiment driver"""
